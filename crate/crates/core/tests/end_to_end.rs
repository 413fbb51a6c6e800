use std::path::Path;

use broadsheet::pipeline::boundary::StubProvider;
use broadsheet::pipeline::manifest::read_manifest;
use broadsheet::pipeline::output::{load_article_level, load_scan_level};
use broadsheet::pipeline::{Engine, OutputLevel, PipelineConfig, Stage, ARTICLES_FILE, ERRORS_FILE, SCANS_FILE, SUMMARY_FILE};
use broadsheet::testkit::{sample_pages, sample_vocab, Corpus, CorpusPaths};
use broadsheet::PageScan;

fn corpus(dir: &Path) -> CorpusPaths {
    Corpus::new(&sample_vocab(), 32, 11).write(dir, &sample_pages()).unwrap()
}

fn run(paths: &CorpusPaths, out: &Path, workers: usize) -> broadsheet::pipeline::BatchSummary {
    let mut cfg = PipelineConfig::load(&paths.config).unwrap();
    cfg.workers = workers;
    broadsheet::pipeline::run_batch(&paths.manifest, cfg, out).unwrap()
}

fn strip_confidence(mut scans: Vec<PageScan>) -> Vec<PageScan> {
    for s in &mut scans {
        for r in &mut s.regions {
            r.confidence = (r.confidence * 1000.0).round() / 1000.0;
        }
    }
    scans
}

#[test]
fn sample_newspaper_matches_expected_output() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    let out = dir.path().join("out");
    let summary = run(&paths, &out, 2);
    assert_eq!(summary.scans_processed, 3);
    assert_eq!(summary.scans_failed, 0);

    let got = strip_confidence(load_scan_level(&out.join(SCANS_FILE)).unwrap());
    let want = strip_confidence(load_scan_level(&paths.expected).unwrap());
    assert_eq!(got, want);

    let articles = load_article_level(&out.join(ARTICLES_FILE)).unwrap();
    let a = articles.iter().find(|a| a.headline.as_deref() == Some("MAYOR OPENS BRIDGE")).unwrap();
    assert_eq!(a.byline.as_deref(), Some("By John Smith"));
    assert_eq!(a.article_text, "the new bridge was opened\nby the mayor on monday\nbefore a large crowd");
    assert!(articles.iter().any(|a| a.article_text.contains("zanzibarish")));
    // the illegible article on scan-c produces no record
    assert_eq!(articles.iter().filter(|a| a.scan_id == "scan-c").count(), 1);
    assert_eq!(summary.decode.char_path, 1);
    assert_eq!(std::fs::read_to_string(out.join(ERRORS_FILE)).unwrap(), "");
    assert!(out.join(SUMMARY_FILE).exists());
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    let mut outputs = Vec::new();
    for w in [1, 4] {
        let out = dir.path().join(format!("out{w}"));
        run(&paths, &out, w);
        outputs.push((
            std::fs::read(out.join(SCANS_FILE)).unwrap(),
            std::fs::read(out.join(ARTICLES_FILE)).unwrap(),
            std::fs::read(out.join(ERRORS_FILE)).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn corrupt_scan_is_ledgered_and_batch_continues() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    std::fs::write(dir.path().join("scans/scan-b.json"), "{ not json").unwrap();
    let out = dir.path().join("out");
    let summary = run(&paths, &out, 2);
    assert_eq!(summary.scans_processed, 2);
    assert_eq!(summary.errors.len(), 1);
    assert_eq!(summary.errors[0].scan_id, "scan-b");
    assert_eq!(summary.errors[0].stage, Stage::Open);
    let scans = load_scan_level(&out.join(SCANS_FILE)).unwrap();
    assert_eq!(scans.iter().map(|s| s.scan_id.as_str()).collect::<Vec<_>>(), ["scan-a", "scan-c"]);
}

#[test]
fn duplicate_page_key_is_ledgered() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    let mut entries = read_manifest(&paths.manifest).unwrap();
    let mut dup = entries[0].clone();
    dup.scan_id = "scan-a-again".into();
    entries.push(dup);
    let engine = Engine::new(PipelineConfig::load(&paths.config).unwrap()).unwrap();
    let outcome = engine.run_batch(&entries, &StubProvider::new(dir.path()), 3).unwrap();
    assert_eq!(outcome.summary.scans_processed, 3);
    assert_eq!(outcome.summary.errors[0].scan_id, "scan-a-again");
    assert_eq!(outcome.summary.errors[0].stage, Stage::Validate);
}

#[test]
fn empty_manifest_produces_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    std::fs::write(&paths.manifest, "").unwrap();
    let out = dir.path().join("out");
    let summary = run(&paths, &out, 1);
    assert_eq!(summary.scans_total, 0);
    assert_eq!(std::fs::read_to_string(out.join(SCANS_FILE)).unwrap(), "");
    assert_eq!(std::fs::read_to_string(out.join(ARTICLES_FILE)).unwrap(), "");
}

#[test]
fn output_level_selects_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    let engine = Engine::new(PipelineConfig::load(&paths.config).unwrap()).unwrap();
    let entries = read_manifest(&paths.manifest).unwrap();
    let outcome = engine.run_batch(&entries, &StubProvider::new(dir.path()), 1).unwrap();
    let out = dir.path().join("articles-only");
    outcome.write(&out, OutputLevel::Article).unwrap();
    assert!(out.join(ARTICLES_FILE).exists());
    assert!(!out.join(SCANS_FILE).exists());
}

#[test]
fn spellcheck_corrects_body_text_only() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path());
    let lex = dir.path().join("lexicon.txt");
    std::fs::write(&lex, "zanzibarism\t10\nthe\t100\ncouncil\t5\n").unwrap();
    let mut cfg = PipelineConfig::load(&paths.config).unwrap();
    cfg.spellcheck = true;
    cfg.lexicon.spell_lexicon = Some(lex);
    let out = dir.path().join("out");
    broadsheet::pipeline::run_batch(&paths.manifest, cfg, &out).unwrap();
    let articles = load_article_level(&out.join(ARTICLES_FILE)).unwrap();
    let a = articles.iter().find(|a| a.scan_id == "scan-b").unwrap();
    assert_eq!(a.article_text, "the council met on tuesday\nand approved the zanzibarism plan");
    assert_eq!(a.headline.as_deref(), Some("COUNCIL MEETS"));
}
