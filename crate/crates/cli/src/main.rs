//! `langgate`: classify vocabularies, record traces, train gates and run
//! gated decoding from the command line.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for bad input data.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use langgate::decoder::{speculative_decode, DecodeSummary, Decoder, RuleConfig, SpecMode, StepOutcome};
use langgate::eval::{confusion_point_stats, evaluate_responses, partition_by_reference, ResponseRecord};
use langgate::gate::file::read_gate_file;
use langgate::gate::{save_gate, train, GateParams, TrainConfig};
use langgate::io::{read_json, read_jsonl, to_jsonl, write_atomic, write_json};
use langgate::models::{record_trace, write_trace, ModelRegistry, RecordOptions, StepModel, SynthConfig, SyntheticModel};
use langgate::sampling::{top_norm_fraction, EmbeddingNorms, SamplingParams};
use langgate::vocab::file::{read_classification, read_vocab, write_classification, write_vocab};
use langgate::vocab::{classify_vocabulary, UnicodeBlockTable, VocabClassification};
use langgate::TokenId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A bad invocation that clap cannot catch (conflicting inputs and such).
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "langgate", version, about = "Decoding-time language confusion gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify every vocabulary token into CJ, Latin, Symbols or LowRes
    ClassifyVocab(ClassifyArgs),
    /// Share of each family among the highest-norm output embeddings
    NormReport(NormReportArgs),
    /// Write a synthetic model directory (config.json and vocab.jsonl)
    Synth(SynthArgs),
    /// Record an ungated rollout trace from a synthetic model
    Record(RecordArgs),
    /// Train a gate on a recorded trace
    TrainGate(TrainArgs),
    /// Decode with or without a gate, writing one outcome per step
    Decode(DecodeArgs),
    /// Confusion and code-switch rates of a responses file
    Eval(EvalArgs),
    /// Confusion-point statistics of a decode output file
    Stats(StatsArgs),
    /// Greedy speculative decoding with the gate applied at verification
    Specdec(SpecdecArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Vocabulary JSONL with `id` and `bytes_hex`
    #[arg(long)]
    vocab: PathBuf,
    /// Classification JSONL to write (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print per-family counts
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct NormReportArgs {
    /// Vocabulary JSONL whose records all carry `norm`
    #[arg(long)]
    vocab: PathBuf,
    /// Classification JSONL (classified on the fly when absent)
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Fraction of all tokens counted as high-norm
    #[arg(long, default_value_t = 0.05)]
    top_frac: f64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic model config JSON; missing fields take defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model directory to create
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArg {
    /// Model as `synthetic:<dir|config.json>`, `trace:<dir>`, or a path
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Number of sequences (synthetic sequence ids from --first-sequence)
    #[arg(long, default_value_t = 100)]
    sequences: u64,
    #[arg(long, default_value_t = 0)]
    first_sequence: u64,
    /// Decoding steps per sequence
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Entries kept per sparse probability list
    #[arg(long = "M", default_value_t = 256)]
    m: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace directory to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long, default_value_t = 0.95)]
    top_p: f64,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
}

impl SamplingArgs {
    fn params(&self) -> Result<SamplingParams> {
        Ok(SamplingParams::new(self.top_k, self.top_p, self.temp)?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Trace directory
    #[arg(long)]
    trace: PathBuf,
    /// Classification JSONL (classified from the trace vocabulary when absent)
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Pseudo-target top-k
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Pseudo-target top-p
    #[arg(long, default_value_t = 0.95)]
    p: f64,
    /// Targets from norm-adjusted distributions (default)
    #[arg(long, conflicts_with = "unadjusted")]
    adjusted: bool,
    /// Targets from raw distributions
    #[arg(long)]
    unadjusted: bool,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    d_hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    /// Sigmoid decision threshold stored with the gate
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gate JSON to write
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history JSONL
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    /// Synthetic sequence id whose prompt starts decoding
    #[arg(long, default_value_t = 0)]
    sequence: u64,
    /// Number of consecutive sequences to decode
    #[arg(long, default_value_t = 1)]
    sequences: u64,
    /// Explicit prompt token ids, comma separated
    #[arg(long, value_delimiter = ',')]
    prompt: Option<Vec<TokenId>>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Gate JSON; plain sampling when absent
    #[arg(long)]
    gate: Option<PathBuf>,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    max_steps: usize,
    /// Intervention rules: `all`, `none`, or a list such as `1,3`.
    /// Safety sets are fixed at (k=5, p=0.999) and (k=20, p=0.95)
    #[arg(long, default_value = "all")]
    rules: String,
    /// Gate threshold; defaults to the gate file's (0.5 when unset)
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    prompt: PromptArgs,
    /// Outcome JSONL (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Cj,
    Latin,
    All,
}

#[derive(Args)]
struct EvalArgs {
    /// Responses JSONL with `id`, `text` and optional `reference`
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    family: FamilyArg,
    /// Report NO-LATIN and WITH-LATIN reference subsets separately
    #[arg(long)]
    partition: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct StatsArgs {
    /// Decode output JSONL
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct SpecdecArgs {
    /// Draft model spec
    #[arg(long)]
    draft: String,
    /// Target model spec
    #[arg(long)]
    target: String,
    #[arg(long)]
    gate: PathBuf,
    /// Draft tokens proposed per round
    #[arg(long, default_value_t = 4)]
    gamma: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    max_steps: usize,
    #[arg(long, default_value = "all")]
    rules: String,
    #[command(flatten)]
    prompt: PromptArgs,
    /// Result JSON (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn classes_for(model: &dyn StepModel, path: Option<&Path>) -> Result<VocabClassification> {
    let classes = match path {
        Some(p) => read_classification(p)?,
        None => classify_vocabulary(&UnicodeBlockTable::standard(), model.vocab())?,
    };
    if classes.len() != model.vocab_size() {
        return Err(usage(format!(
            "classification covers {} tokens, the model has {}",
            classes.len(),
            model.vocab_size()
        )));
    }
    Ok(classes)
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let vf = read_vocab(&args.vocab)?;
    let classes = classify_vocabulary(&UnicodeBlockTable::standard(), &vf.entries)?;
    match &args.out {
        Some(p) => write_classification(p, &classes)?,
        None => emit(None, &langgate::vocab::file::classification_jsonl(&classes)?)?,
    }
    if args.summary {
        let target: &mut dyn Write = if args.out.is_some() { &mut std::io::stdout() } else { &mut std::io::stderr() };
        writeln!(target, "total\t{}", classes.len())?;
        for (f, n) in classes.counts() {
            writeln!(target, "{f}\t{n}")?;
        }
    }
    Ok(())
}

fn norm_report(args: NormReportArgs) -> Result<()> {
    let vf = read_vocab(&args.vocab)?;
    let norms = vf
        .norms
        .ok_or_else(|| langgate::Error::Model(format!("{}: every record needs a `norm`", args.vocab.display())))?;
    let norms = EmbeddingNorms::new(norms)?;
    let classes = match &args.classes {
        Some(p) => read_classification(p)?,
        None => classify_vocabulary(&UnicodeBlockTable::standard(), &vf.entries)?,
    };
    let fr = top_norm_fraction(&norms, &classes, args.top_frac)?;
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&fr)?),
        Format::Text => {
            println!("family\ttokens\ttop {:.2}% share", args.top_frac * 100.0);
            for (f, v) in &fr {
                let share = v.map_or("-".to_string(), |x| format!("{x:.2}"));
                println!("{f}\t{}\t{share}", classes.count(*f));
            }
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config: SynthConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let model = SyntheticModel::new(config)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_vocab(&args.out.join("vocab.jsonl"), model.vocab(), Some(model.norms().as_slice()))?;
    write_json(&args.out.join("config.json"), model.config())?;
    Ok(())
}

fn record(args: RecordArgs) -> Result<()> {
    let model = ModelRegistry::default().load(&args.model.model)?;
    let synth = model
        .as_synthetic()
        .ok_or_else(|| usage("record needs a synthetic model; real-model traces come from the recorder"))?;
    let prompts: Vec<Vec<TokenId>> = (args.first_sequence..args.first_sequence + args.sequences)
        .map(|s| synth.prompt_for(s))
        .collect();
    let opts = RecordOptions {
        m: args.m,
        steps_per_prompt: args.steps,
        params: args.sampling.params()?,
        seed: args.seed,
        source: format!("synthetic seed {}", synth.config().seed),
    };
    let trace = record_trace(model.as_ref(), &prompts, &opts)?;
    write_trace(&args.out, &trace)?;
    eprintln!("recorded {} steps to {}", trace.steps.len(), args.out.display());
    Ok(())
}

fn train_gate(args: TrainArgs) -> Result<()> {
    let trace = langgate::models::read_trace(&args.trace)?;
    let classes = match &args.classes {
        Some(p) => read_classification(p)?,
        None => trace.classify(&UnicodeBlockTable::standard())?,
    };
    if classes.len() != trace.meta.vocab_size {
        return Err(usage(format!(
            "classification covers {} tokens, the trace vocabulary has {}",
            classes.len(),
            trace.meta.vocab_size
        )));
    }
    let config = TrainConfig {
        k: args.k,
        p: args.p,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        d_hidden: args.d_hidden,
        validation_fraction: args.validation_fraction,
        threshold: args.threshold,
        target: if args.unadjusted { "unadjusted" } else { "adjusted" }.into(),
    };
    let outcome = train(&trace, &classes, &config)?;
    save_gate(&args.out, &outcome.params, config.threshold, Some(&config))?;
    if let Some(h) = &args.history {
        write_atomic(h, &to_jsonl(&outcome.history)?)?;
    }
    let first = &outcome.history[0];
    let last = outcome.history.last().expect("history has epoch 0");
    eprintln!(
        "{} examples ({} truncated), train loss {:.4} -> {:.4}, best epoch {}",
        outcome.examples, outcome.truncated, first.train_loss, last.train_loss, outcome.best_epoch
    );
    Ok(())
}

fn load_gate_with_threshold(path: &Path) -> Result<(GateParams, f64)> {
    let file = read_gate_file(path)?;
    Ok((file.params()?, file.threshold))
}

/// Prompts to decode: explicit ids, synthetic sequence prompts, or the
/// recorded prompts of a trace.
fn prompts(model: &dyn StepModel, args: &PromptArgs) -> Result<Vec<(u64, Vec<TokenId>)>> {
    if let Some(p) = &args.prompt {
        if p.is_empty() {
            return Err(usage("--prompt needs at least one token id"));
        }
        return Ok(vec![(args.sequence, p.clone())]);
    }
    let range = args.sequence..args.sequence + args.sequences;
    if let Some(m) = model.as_synthetic() {
        return Ok(range.map(|s| (s, m.prompt_for(s))).collect());
    }
    if let Some(t) = model.as_trace() {
        let seqs = t.sequences();
        return Ok(range
            .filter_map(|s| seqs.get(s as usize).map(|(p, _)| (s, p.clone())))
            .collect());
    }
    Err(usage("this model needs an explicit --prompt"))
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    seq: u64,
    #[serde(flatten)]
    outcome: &'a StepOutcome,
}

#[derive(Serialize)]
struct SequenceLine {
    seq: u64,
    tokens: Vec<TokenId>,
    text: String,
}

#[derive(Serialize)]
struct SummaryLine {
    summary: DecodeSummary,
}

fn text_of(model: &dyn StepModel, tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens.iter().flat_map(|&t| model.vocab()[t as usize].bytes.iter().copied()).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

fn decode(args: DecodeArgs) -> Result<()> {
    let model = ModelRegistry::default().load(&args.model.model)?;
    let classes = classes_for(model.as_ref(), None)?;
    let gate = args.gate.as_deref().map(load_gate_with_threshold).transpose()?;
    let threshold = args.threshold.or(gate.as_ref().map(|g| g.1)).unwrap_or(0.5);
    let rules = RuleConfig::default().with_threshold(threshold).with_rules(&args.rules)?;
    let decoder = Decoder::new(model.as_ref(), &classes)
        .with_gate(gate.as_ref().map(|g| &g.0))
        .with_params(args.sampling.params()?)
        .with_rules(rules);

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut buf = Vec::new();
    let mut all = Vec::new();
    for (seq, prompt) in prompts(model.as_ref(), &args.prompt)? {
        let d = decoder.decode(&prompt, &mut rng, args.max_steps)?;
        for o in &d.outcomes {
            serde_json::to_writer(&mut buf, &OutcomeLine { seq, outcome: o })?;
            buf.push(b'\n');
        }
        let line = SequenceLine {
            seq,
            text: text_of(model.as_ref(), &d.tokens),
            tokens: d.tokens,
        };
        serde_json::to_writer(&mut buf, &line)?;
        buf.push(b'\n');
        all.extend(d.outcomes);
    }
    serde_json::to_writer(&mut buf, &SummaryLine { summary: DecodeSummary::from_outcomes(&all) })?;
    buf.push(b'\n');
    emit(args.out.as_deref(), &buf)
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: langgate::eval::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    no_latin: Option<langgate::eval::EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    with_latin: Option<langgate::eval::EvalReport>,
}

fn print_report(name: &str, r: &langgate::eval::EvalReport, family: FamilyArg) {
    let cj = format!("cj {:.2}% ({}/{})", r.cj_percent, r.cj_count, r.n);
    let latin = format!("latin {:.2}% ({}/{})", r.latin_percent, r.latin_count, r.n);
    match family {
        FamilyArg::Cj => println!("{name}: {cj}"),
        FamilyArg::Latin => println!("{name}: {latin}"),
        FamilyArg::All => println!("{name}: {cj}, {latin}"),
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let responses: Vec<ResponseRecord> = read_jsonl(&args.responses)?;
    if responses.is_empty() {
        return Err(langgate::Error::Model(format!("{}: no responses", args.responses.display())).into());
    }
    let table = UnicodeBlockTable::standard();
    let report = evaluate_responses(&responses, &table)?;
    let (mut no_latin, mut with_latin) = (None, None);
    if args.partition {
        let (a, b) = partition_by_reference(&responses, &table);
        no_latin = (!a.is_empty()).then(|| evaluate_responses(&a, &table)).transpose()?;
        with_latin = (!b.is_empty()).then(|| evaluate_responses(&b, &table)).transpose()?;
    }
    match args.format {
        Format::Json => {
            let out = EvalOutput { report, no_latin, with_latin };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Format::Text => {
            print_report("all", &report, args.family);
            if let Some(r) = &no_latin {
                print_report("no-latin", r, args.family);
            }
            if let Some(r) = &with_latin {
                print_report("with-latin", r, args.family);
            }
        }
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let lines: Vec<serde_json::Value> = read_jsonl(&args.outcomes)?;
    // sequence and summary records are skipped
    let outcomes: Vec<StepOutcome> = lines
        .into_iter()
        .filter(|v| v.get("token_id").is_some())
        .map(serde_json::from_value)
        .collect::<Result<_, _>>()
        .with_context(|| format!("{}: malformed outcome record", args.outcomes.display()))
        .map_err(|e| langgate::Error::Model(format!("{e:#}")))?;
    let st = confusion_point_stats(&outcomes);
    let summary = DecodeSummary::from_outcomes(&outcomes);
    match args.format {
        Format::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({ "confusion_points": st, "decode": summary }))?
            );
        }
        Format::Text => {
            let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.2}%", v * 100.0));
            println!("steps\t{}", st.steps);
            println!("confusion points\t{}", st.points);
            println!("top-1 confusion\t{}", pct(st.top1_confusion_frac));
            println!("consistent in top-3\t{}", pct(st.top3_consistent_frac));
            println!("interventions\t{} ({:.2}%)", summary.interventions, summary.intervention_rate * 100.0);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SpecdecOutput {
    seq: u64,
    tokens: Vec<TokenId>,
    text: String,
    proposed: usize,
    accepted: usize,
    acceptance_rate: Option<f64>,
    rounds: usize,
    /// Whether the output equals autoregressive gated greedy decoding.
    matches_autoregressive: bool,
}

fn specdec(args: SpecdecArgs) -> Result<()> {
    let registry = ModelRegistry::default();
    let draft = registry.load(&args.draft)?;
    let target = registry.load(&args.target)?;
    let classes = classes_for(target.as_ref(), None)?;
    let (gate, threshold) = load_gate_with_threshold(&args.gate)?;
    let rules = RuleConfig::default().with_threshold(threshold).with_rules(&args.rules)?;
    let mut results = Vec::new();
    for (seq, prompt) in prompts(target.as_ref(), &args.prompt)? {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let spec = speculative_decode(
            draft.as_ref(),
            target.as_ref(),
            &classes,
            &gate,
            &rules,
            args.gamma,
            SpecMode::Greedy,
            &prompt,
            &mut rng,
            args.max_steps,
        )?;
        let matches = if target.as_trace().is_some() {
            // a trace replays once; there is nothing to compare against
            false
        } else {
            let reference = Decoder::new(target.as_ref(), &classes)
                .with_gate(Some(&gate))
                .with_params(SamplingParams::greedy())
                .with_rules(rules.clone())
                .decode(&prompt, &mut rng, args.max_steps)?;
            reference.tokens == spec.tokens
        };
        results.push(SpecdecOutput {
            seq,
            text: text_of(target.as_ref(), &spec.tokens),
            acceptance_rate: spec.acceptance_rate(),
            tokens: spec.tokens,
            proposed: spec.proposed,
            accepted: spec.accepted,
            rounds: spec.rounds,
            matches_autoregressive: matches,
        });
    }
    emit_json(args.out.as_deref(), &results)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ClassifyVocab(a) => classify(a),
        Command::NormReport(a) => norm_report(a),
        Command::Synth(a) => synth(a),
        Command::Record(a) => record(a),
        Command::TrainGate(a) => train_gate(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a),
        Command::Specdec(a) => specdec(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<langgate::Error>() {
        Some(e) if !e.is_data_error() => 1,
        _ => 2,
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&usage("x")), 1);
        let e: anyhow::Error = SamplingParams::new(0, 0.9, 1.0).unwrap_err().into();
        assert_eq!(exit_code(&e), 1);
        let e: anyhow::Error = langgate::Error::Model("bad".into()).into();
        assert_eq!(exit_code(&e.context("while loading")), 2);
    }
}
