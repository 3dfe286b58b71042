//! Command-line surface: `synth`, `preprocess`, `train`, `evaluate`,
//! `compare` and `report`, sharing one layered [`RunConfig`].

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::models::{load_checkpoint, save_checkpoint, Checkpoint, ModelKind};
use crate::rng::{derive_seed, derive_seed_n};
use crate::signal::io::{csv_writer, read_signal_csv, write_signal_csv};
use crate::signal::{preprocess, BandpassSpec, Label, RejectionReason};
use crate::synth::{
    build_corpus, generate_frame, intervals_to_json, label_pulses, statistical_annotator, AnnotatedFrame,
    AnnotatorConfig, ArtifactInterval, CorpusConfig, GeneratorConfig,
};
use crate::train::{
    compare, evaluate, read_aggregate_csv, run_pipeline, write_aggregate_csv, write_curves_csv, AggregateRow,
    CompareSpec, RunSpec, SeedStat,
};

/// Effective configuration: defaults, then the TOML file, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub generator: GeneratorConfig,
    pub bandpass: BandpassSpec,
    pub annotator: AnnotatorConfig,
    /// Size of the synthetic corpus used when no pulse file is given.
    pub corpus_pulses: usize,
    pub model: ModelKind,
    pub portion: f64,
    pub run: RunSpec,
    pub compare: CompareSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            threads: 0,
            generator: GeneratorConfig::default(),
            bandpass: BandpassSpec::default(),
            annotator: AnnotatorConfig::default(),
            corpus_pulses: 4000,
            model: ModelKind::GrnTransformer,
            portion: 1.0,
            run: RunSpec::default(),
            compare: CompareSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.bandpass.validate(self.generator.sample_rate_hz)?;
        self.run.validate()?;
        self.compare.validate()?;
        if !(self.portion > 0.0 && self.portion <= 1.0) {
            return Err(Error::Config(format!("portion must be in (0, 1], got {}", self.portion)));
        }
        if self.corpus_pulses == 0 {
            return Err(Error::Config("corpus_pulses must be positive".into()));
        }
        Ok(())
    }

    fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            generator: GeneratorConfig {
                seed: derive_seed(self.seed, "corpus"),
                ..self.generator.clone()
            },
            bandpass: self.bandpass,
            target_pulses: self.corpus_pulses,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "grn-ppg", version, about = "PPG artifact detection with gated residual networks")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for `compare` (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic PPG frames.
    Synth(SynthArgs),
    /// Filter, segment and normalize a raw signal into pulses.
    Preprocess(PreprocessArgs),
    /// Train one model and write a checkpoint plus its report.
    Train(TrainArgs),
    /// Score a pulse file with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Train a grid of models, portions and seeds.
    Compare(CompareArgs),
    /// Summarize an aggregate CSV written by `compare`.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub artifact_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw signal CSV (`t_s,ppg`).
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth intervals JSON; without it pulses are unlabeled.
    #[arg(long)]
    pub intervals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pulse CSV; a synthetic corpus is generated when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub portion: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub portions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Aggregate CSV; defaults to `<out>/aggregate.csv`.
    #[arg(long)]
    pub aggregate: Option<PathBuf>,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Layers file and flags into the effective configuration.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
        cfg.compare.threads = t;
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(d) = a.duration {
                cfg.generator.duration_s = d;
            }
            if let Some(r) = a.artifact_rate {
                cfg.generator.artifact_rate = r;
            }
        }
        Command::Train(a) => {
            if let Some(m) = &a.model {
                cfg.model = m.parse()?;
            }
            if let Some(p) = a.portion {
                cfg.portion = p;
            }
            if let Some(e) = a.epochs {
                cfg.run.train.max_epochs = e;
            }
        }
        Command::Compare(a) => {
            if let Some(ms) = &a.models {
                cfg.compare.models = ms.iter().map(|m| m.parse()).collect::<Result<_>>()?;
            }
            if let Some(p) = &a.portions {
                cfg.compare.portions = p.clone();
            }
            if let Some(s) = &a.seeds {
                cfg.compare.seeds = s.clone();
            }
            if let Some(e) = a.epochs {
                cfg.run.train.max_epochs = e;
            }
        }
        Command::Preprocess(_) | Command::Evaluate(_) | Command::Report(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), &cfg)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Preprocess(a) => cmd_preprocess(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Compare(a) => cmd_compare(&cfg, a),
        Command::Report(a) => cmd_report(&cfg, a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

fn load_or_build_dataset(cfg: &RunConfig, data: Option<&Path>) -> Result<PulseDataset> {
    match data {
        Some(p) => PulseDataset::read_csv(open(p)?),
        None => {
            log::info!("building a {}-pulse synthetic corpus", cfg.corpus_pulses);
            Ok(build_corpus(&cfg.corpus_config())?.dataset)
        }
    }
}

fn cmd_synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    if a.frames == 0 {
        return Err(Error::Config("frames must be at least 1".into()));
    }
    let mut all = PulseDataset::new();
    for i in 0..a.frames {
        let gen = GeneratorConfig {
            seed: if a.frames == 1 { cfg.seed } else { derive_seed_n(cfg.seed, i as u64) },
            ..cfg.generator.clone()
        };
        let frame = generate_frame(&gen)?;
        let suffix = if a.frames == 1 { String::new() } else { format!("_{i:04}") };
        write_signal_csv(&frame.frame, create(&cfg.out.join(format!("signal{suffix}.csv")))?)?;
        fs::write(
            cfg.out.join(format!("intervals{suffix}.json")),
            intervals_to_json(&frame.intervals)? + "\n",
        )?;
        let mut pre = preprocess(&frame.frame, &cfg.bandpass, &format!("synth{suffix}"))?;
        label_pulses(&frame, &mut pre.pulses)?;
        all.extend(&PulseDataset::from_pulses(&pre.pulses)?);
    }
    all.write_csv(create(&cfg.out.join("pulses.csv"))?)?;
    let art = all.count(Label::Artifact);
    println!(
        "artifact prevalence: {:.4} ({art}/{} pulses, target {})",
        art as f64 / all.len().max(1) as f64,
        all.len(),
        cfg.generator.artifact_rate
    );
    if all.len() >= crate::synth::MIN_ANNOTATOR_PULSES {
        let flags = statistical_annotator(&all, &cfg.annotator)?;
        let agree = (0..all.len())
            .filter(|&i| flags[i] == (all.label(i) == Some(Label::Artifact)))
            .count();
        println!("annotator agreement: {:.4}", agree as f64 / all.len() as f64);
    }
    Ok(())
}

#[derive(Serialize)]
struct RejectionFile<'a> {
    config: &'a RunConfig,
    input: &'a Path,
    accepted: usize,
    too_short: usize,
    too_long: usize,
    degenerate: usize,
    rejected: &'a crate::signal::RejectionReport,
}

fn cmd_preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> Result<()> {
    let frame = read_signal_csv(open(&a.input)?)?;
    let source = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "signal".into());
    let mut pre = preprocess(&frame, &cfg.bandpass, &source)?;
    if let Some(path) = &a.intervals {
        let intervals: Vec<ArtifactInterval> = serde_json::from_reader(open(path)?)?;
        label_pulses(&AnnotatedFrame { frame, intervals }, &mut pre.pulses)?;
    }
    PulseDataset::from_pulses(&pre.pulses)?.write_csv(create(&cfg.out.join("pulses.csv"))?)?;
    let r = &pre.report;
    write_json(
        &cfg.out.join("rejections.json"),
        &RejectionFile {
            config: cfg,
            input: &a.input,
            accepted: pre.pulses.len(),
            too_short: r.count(RejectionReason::TooShort),
            too_long: r.count(RejectionReason::TooLong),
            degenerate: r.count(RejectionReason::Degenerate),
            rejected: r,
        },
    )?;
    println!("{} pulses accepted, {} rejected", pre.pulses.len(), r.len());
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a, T: Serialize> {
    config: &'a RunConfig,
    report: &'a T,
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let data = load_or_build_dataset(cfg, a.data.as_deref())?;
    let out = run_pipeline(&data, cfg.model, cfg.portion, cfg.seed, &cfg.run)?;
    let r = &out.report;
    let subset = data.subset(&out.portion_rows);
    subset.subset(&out.split.test).write_csv(create(&cfg.out.join("test_pulses.csv"))?)?;
    save_checkpoint(
        &cfg.out.join("checkpoint"),
        &Checkpoint {
            kind: cfg.model,
            model: out.model.clone(),
            seed: derive_seed(cfg.seed, "init"),
            metrics: serde_json::json!({ "confusion": r.confusion, "metrics": r.metrics }),
            extra: serde_json::to_value(cfg)?,
        },
    )?;
    write_json(&cfg.out.join("report.json"), &ReportFile { config: cfg, report: r })?;
    write_curves_csv(std::slice::from_ref(r), create(&cfg.out.join("curves.csv"))?)?;
    println!(
        "{}: acc {:.4} pre {:.4} rec {:.4} f1 {:.4} after {} epochs ({:.1} s)",
        cfg.model, r.metrics.acc, r.metrics.pre, r.metrics.rec, r.metrics.f1, r.epochs, r.wall_s
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    model: ModelKind,
    data: PathBuf,
    rows: usize,
    confusion: Option<crate::train::Confusion>,
    metrics: Option<crate::train::Metrics>,
}

fn cmd_evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let data = PulseDataset::read_csv(open(&a.data)?)?;
    if data.is_empty() {
        return Err(Error::InsufficientData("pulse file has no rows".into()));
    }
    let probs = ck.model.predict_proba(data.data())?;
    let mut wr = csv_writer(create(&cfg.out.join("predictions.csv"))?);
    wr.write_record(["source_id", "probability", "prediction"])?;
    for (i, p) in probs.iter().enumerate() {
        wr.write_record([
            data.source_id(i).to_string(),
            p.to_string(),
            u8::from(*p >= 0.5).to_string(),
        ])?;
    }
    wr.flush()?;
    let (confusion, metrics) = if data.is_fully_labeled() {
        let (c, m) = evaluate(&ck.model, &data)?;
        println!("acc {:.4} pre {:.4} rec {:.4} f1 {:.4}", m.acc, m.pre, m.rec, m.f1);
        (Some(c), Some(m))
    } else {
        println!("unlabeled rows present: wrote predictions only");
        (None, None)
    };
    let report = Evaluation {
        model: ck.kind,
        data: a.data.clone(),
        rows: data.len(),
        confusion,
        metrics,
    };
    write_json(&cfg.out.join("eval_report.json"), &ReportFile { config: cfg, report: &report })
}

fn cmd_compare(cfg: &RunConfig, a: &CompareArgs) -> Result<()> {
    let data = load_or_build_dataset(cfg, a.data.as_deref())?;
    let result = compare(&data, &cfg.compare, &cfg.run)?;
    let dir = cfg.out.join("reports");
    fs::create_dir_all(&dir)?;
    for r in &result.reports {
        write_json(
            &dir.join(format!("{}_{}_{}.json", r.model, r.portion, r.seed)),
            &ReportFile { config: cfg, report: r },
        )?;
    }
    write_aggregate_csv(&result.aggregates, create(&cfg.out.join("aggregate.csv"))?)?;
    write_curves_csv(&result.reports, create(&cfg.out.join("curves.csv"))?)?;
    write_json(&cfg.out.join("claims.json"), &result.claims)?;
    print!("{}", render_summary(&result.aggregates));
    for f in result.flags() {
        println!("flag: {f}");
    }
    Ok(())
}

/// Markdown table of the mean and std rows, plus the claim checks on means.
pub fn render_summary(rows: &[AggregateRow]) -> String {
    let mut s = String::from("| model | portion | acc | pre | rec | f1 | smoothness |\n|---|---|---|---|---|---|---|\n");
    for m in rows.iter().filter(|r| r.seed == SeedStat::Mean) {
        let sd = rows
            .iter()
            .find(|r| r.seed == SeedStat::Std && r.model == m.model && r.portion == m.portion);
        let cell = |mean: f64, std: Option<f64>| match std {
            _ if mean.is_nan() => "n/a".to_string(),
            Some(sd) if !sd.is_nan() => format!("{mean:.3} ± {sd:.3}"),
            _ => format!("{mean:.3}"),
        };
        s += &format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            m.model,
            m.portion,
            cell(m.acc, sd.map(|r| r.acc)),
            cell(m.pre, sd.map(|r| r.pre)),
            cell(m.rec, sd.map(|r| r.rec)),
            cell(m.f1, sd.map(|r| r.f1)),
            cell(m.smoothness, sd.map(|r| r.smoothness)),
        );
    }
    s
}

fn cmd_report(cfg: &RunConfig, a: &ReportArgs) -> Result<()> {
    let path = a.aggregate.clone().unwrap_or_else(|| cfg.out.join("aggregate.csv"));
    let rows = read_aggregate_csv(open(&path)?)?;
    let text = render_summary(&rows);
    let mut f = create(&cfg.out.join("report.md"))?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("grn-ppg").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 9\nportion = 0.5\n[generator]\nartifact_rate = 0.2\n").unwrap();
        let cli = parse(&["synth", "--config", path.to_str().unwrap(), "--artifact-rate", "0.1"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.portion, 0.5);
        assert_eq!(cfg.generator.artifact_rate, 0.1);
        assert_eq!(cfg.generator.duration_s, 30.0);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = resolve_config(&parse(&["synth", "--artifact-rate", "0.9"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = resolve_config(&parse(&["train", "--model", "bilstm"])).unwrap_err();
        assert!(err.to_string().contains("grn-transformer"));
        assert_eq!(err.exit_code(), 2);
        assert!(RunConfig::from_toml("sed = 1").is_err());
    }

    #[test]
    fn compare_lists_parse() {
        let cli = parse(&["compare", "--models", "transformer,grn-transformer", "--seeds", "1,2,3"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.compare.models, vec![ModelKind::Transformer, ModelKind::GrnTransformer]);
        assert_eq!(cfg.compare.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.compare.portions.len(), 4);
    }
}
