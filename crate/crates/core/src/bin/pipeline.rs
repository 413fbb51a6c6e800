use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use broadsheet::lexicon::{self, build_ocr_dictionary, DictionaryParams, Lexicon, Provenance, SpellIndex};
use broadsheet::pipeline::eval::{evaluate, EvalInputs};
use broadsheet::pipeline::{boundary::StubProvider, manifest, output, Engine, OutputLevel, PipelineConfig};
use broadsheet::recognition::{Embedding, ExemplarIndex, IndexKind};
use broadsheet::testkit;

#[derive(Parser)]
#[command(name = "pipeline", version, about = "Newspaper page digitization pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Process a manifest of scans.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        level: Option<OutputLevel>,
        #[arg(long, value_enum)]
        spellcheck: Option<Switch>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score scan-level predictions against gold scans.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Predictions made from gold layouts, for the CER decomposition.
        #[arg(long)]
        ocr_on_gold: Option<PathBuf>,
        /// Dictionary for non-word rates.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Also report CER after spell correction against this word list.
        #[arg(long)]
        spell_lexicon: Option<PathBuf>,
    },
    /// Write a small synthetic newspaper corpus with config and indexes.
    Sample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(subcommand)]
    Dict(DictCmd),
    #[command(subcommand)]
    Index(IndexCmd),
}

#[derive(Subcommand)]
enum DictCmd {
    /// Build the OCR dictionary from ranked modern words and historical counts.
    Build {
        #[arg(long)]
        modern: PathBuf,
        #[arg(long)]
        historical: PathBuf,
        #[arg(long)]
        extras: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25_000)]
        k_modern: usize,
        #[arg(long, default_value_t = 500)]
        k_hist: usize,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    /// Build an exemplar index from JSON lines of {"label", "vector"}.
    Build {
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "word")]
        kind: KindArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Word,
    Character,
}

#[derive(Deserialize)]
struct ExemplarLine {
    label: String,
    vector: Vec<f32>,
}

fn read_entries(path: &Path) -> anyhow::Result<Vec<(String, Option<u64>)>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(lexicon::parse_entries(BufReader::new(f))?)
}

/// Returns whether any scan failed.
fn run(
    manifest_path: &Path,
    config: &Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
    level: Option<OutputLevel>,
    spellcheck: Option<Switch>,
    seed: Option<u64>,
) -> anyhow::Result<bool> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(l) = level {
        cfg.level = l;
    }
    if let Some(s) = spellcheck {
        cfg.spellcheck = matches!(s, Switch::On);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = match out.or_else(|| cfg.output_dir.clone()) {
        Some(o) => o,
        None => bail!("no output directory: pass --out or set output_dir"),
    };
    let entries = manifest::read_manifest(manifest_path)?;
    let (workers, level) = (cfg.workers, cfg.level);
    let engine = Engine::new(cfg).context("loading pipeline resources")?;
    let provider = StubProvider::new(manifest_path.parent().unwrap_or(Path::new(".")));
    let outcome = engine.run_batch(&entries, &provider, workers)?;
    outcome.write(&out, level)?;
    let s = &outcome.summary;
    eprintln!(
        "{} scans, {} processed, {} failed, {} articles, {} lines in {:.2}s",
        s.scans_total, s.scans_processed, s.scans_failed, s.articles, s.decode.lines, s.elapsed_secs
    );
    Ok(s.scans_failed > 0)
}

fn eval(pred: &Path, gold: &Path, ocr: Option<PathBuf>, lex: Option<PathBuf>, spell: Option<PathBuf>) -> anyhow::Result<()> {
    let pred = output::load_scan_level(pred)?;
    let gold = output::load_scan_level(gold)?;
    let ocr = ocr.map(|p| output::load_scan_level(&p)).transpose()?;
    let lex = lex.map(|p| Lexicon::load(&p, Provenance::Modern)).transpose()?;
    let spell = match spell {
        Some(p) => Some(SpellIndex::build(&Lexicon::load(&p, Provenance::Modern)?, 2)?),
        None => None,
    };
    let report = evaluate(&pred, &gold, EvalInputs { ocr_on_gold: ocr.as_deref(), lexicon: lex.as_ref(), spell: spell.as_ref() })?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn dict_build(modern: &Path, historical: &Path, extras: Option<PathBuf>, out: &Path, params: DictionaryParams) -> anyhow::Result<()> {
    let modern: Vec<(String, u64)> = read_entries(modern)?.into_iter().map(|(w, f)| (w, f.unwrap_or(0))).collect();
    let mut hist: HashMap<String, u64> = HashMap::new();
    for (w, c) in read_entries(historical)? {
        *hist.entry(w).or_default() += c.unwrap_or(1);
    }
    let extras: Vec<String> = match extras {
        Some(p) => read_entries(&p)?.into_iter().map(|(w, _)| w).collect(),
        None => Vec::new(),
    };
    let (lex, report) = build_ocr_dictionary(&modern, &hist, &extras, &params)?;
    let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(f);
    lex.write_to(&mut w)?;
    w.flush()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn index_build(exemplars: &Path, out: &Path, kind: KindArg) -> anyhow::Result<()> {
    let f = File::open(exemplars).with_context(|| format!("opening {}", exemplars.display()))?;
    let lines: Vec<ExemplarLine> = output::read_jsonl(BufReader::new(f))?;
    let kind = match kind {
        KindArg::Word => IndexKind::Word,
        KindArg::Character => IndexKind::Character,
    };
    let idx = ExemplarIndex::build(lines.into_iter().map(|l| (l.label, Embedding(l.vector))).collect(), kind)?;
    idx.save(out)?;
    eprintln!("{} exemplars of dimension {}", idx.len(), idx.dim());
    Ok(())
}

fn sample(out: &Path, seed: u64) -> anyhow::Result<()> {
    let paths = testkit::Corpus::new(&testkit::sample_vocab(), 32, seed).write(out, &testkit::sample_pages())?;
    eprintln!("wrote {} and {}", paths.manifest.display(), paths.config.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { manifest, config, out, workers, level, spellcheck, seed } => {
            run(&manifest, &config, out, workers, level, spellcheck, seed).map(|failed| if failed { 1 } else { 0 })
        }
        Cmd::Eval { pred, gold, ocr_on_gold, lexicon, spell_lexicon } => eval(&pred, &gold, ocr_on_gold, lexicon, spell_lexicon).map(|_| 0),
        Cmd::Sample { out, seed } => sample(&out, seed).map(|_| 0),
        Cmd::Dict(DictCmd::Build { modern, historical, extras, out, k_modern, k_hist }) => {
            dict_build(&modern, &historical, extras, &out, DictionaryParams { k_modern, k_historical: k_hist }).map(|_| 0)
        }
        Cmd::Index(IndexCmd::Build { exemplars, out, kind }) => index_build(&exemplars, &out, kind).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
