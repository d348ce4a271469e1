use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use synlstm::data::parse_corpus;
use synlstm::trainer::load;

const TINY: &str = "hidden = 4\nword_dim = 4\nchar_dim = 3\nchar_hidden = 2\ndeprel_dim = 3\npos_dim = 2\nepochs = 3\nbatch_size = 5\n";

fn synlstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synlstm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        std::fs::write(ws.path("tiny.cfg"), TINY).unwrap();
        let out = synlstm(&["make-synthetic", "--out", s(&ws.path("syn.tsv")), "--sentences", "24", "--seed", "3"]);
        assert_eq!(code(&out), 0);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (cfg, data, out) = (self.path("tiny.cfg"), self.path("syn.tsv"), self.path(out));
        let mut args = vec!["train", "--config", s(&cfg), "--train", s(&data), "--dev", s(&data), "--out", s(&out)];
        args.extend_from_slice(extra);
        synlstm(&args)
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = synlstm(&["train", "--bogus"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&synlstm(&[])), 1);
    assert_eq!(code(&synlstm(&["frobnicate"])), 1);
    assert_eq!(code(&synlstm(&["--help"])), 0);
}

#[test]
fn make_synthetic_is_seeded() {
    let ws = Workspace::new();
    let again = ws.path("again.tsv");
    synlstm(&["make-synthetic", "--out", s(&again), "--sentences", "24", "--seed", "3"]);
    assert_eq!(std::fs::read(ws.path("syn.tsv")).unwrap(), std::fs::read(&again).unwrap());
    let corpus = parse_corpus(&again).unwrap();
    assert_eq!(corpus.len(), 24);
}

#[test]
fn train_predict_eval_round_trip() {
    let ws = Workspace::new();
    let out = ws.train("a.synl", &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("best epoch"));
    assert_eq!(code(&ws.train("b.synl", &[])), 0);
    assert_eq!(std::fs::read(ws.path("a.synl")).unwrap(), std::fs::read(ws.path("b.synl")).unwrap());
    assert_eq!(code(&ws.train("c.synl", &["--seed", "9"])), 0);
    assert_ne!(std::fs::read(ws.path("a.synl")).unwrap(), std::fs::read(ws.path("c.synl")).unwrap());

    let (model, data, pred) = (ws.path("a.synl"), ws.path("syn.tsv"), ws.path("pred.tsv"));
    assert_eq!(code(&synlstm(&["predict", "--model", s(&model), "--data", s(&data), "--out", s(&pred)])), 0);
    let gold = parse_corpus(&data).unwrap();
    let predicted = parse_corpus(&pred).unwrap();
    assert_eq!(predicted.len(), gold.len());
    for (p, g) in predicted.iter().zip(&gold) {
        assert_eq!((&p.tokens, &p.heads), (&g.tokens, &g.heads));
    }

    // the model agrees with its own predictions
    let report = ws.path("report.csv");
    let out = synlstm(&["eval", "--model", s(&model), "--data", s(&pred), "--report", s(&report)]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("metric,bucket,value\n"));
    let has_entities = predicted.iter().any(|s| s.labels.iter().any(|l| l != "O"));
    if has_entities {
        assert!(csv.contains("f1,overall,1\n"), "{csv}");
    }

    let ckpt = load(&model).unwrap();
    let out = synlstm(&["eval", "--model", s(&model), "--data", s(&data)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(&format!("F1={:.4}", ckpt.best_dev_f1)), "{text}");
}

#[test]
fn gate_analysis_writes_the_histogram() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.train("m.synl", &[])), 0);
    let (model, data, csv) = (ws.path("m.synl"), ws.path("syn.tsv"), ws.path("gates.csv"));
    let out = synlstm(&["analyze-gates", "--model", s(&model), "--data", s(&data), "--gate", "m", "--out", s(&csv)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], "bucket_low,bucket_high,count");
    let total: usize = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    let tokens: usize = parse_corpus(&data).unwrap().iter().map(|s| s.len()).sum();
    assert_eq!(total, tokens * 4 * 2);
    let bad = synlstm(&["analyze-gates", "--model", s(&model), "--data", s(&data), "--gate", "z", "--out", s(&csv)]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn data_errors_exit_two() {
    let ws = Workspace::new();
    let broken = ws.path("broken.tsv");
    std::fs::write(&broken, "1\tx\tNN\t5\troot\tO\n").unwrap();
    let (cfg, out) = (ws.path("tiny.cfg"), ws.path("x.synl"));
    let res = synlstm(&["train", "--config", s(&cfg), "--train", s(&broken), "--dev", s(&broken), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
    let missing = synlstm(&["eval", "--model", s(&ws.path("none.synl")), "--data", s(&broken)]);
    assert_eq!(code(&missing), 2);
    std::fs::write(ws.path("junk.synl"), b"not a checkpoint").unwrap();
    let junk = synlstm(&["eval", "--model", s(&ws.path("junk.synl")), "--data", s(&ws.path("syn.tsv"))]);
    assert_eq!(code(&junk), 2);
    let bad_drop = synlstm(&["ablate", "--config", s(&cfg), "--data", s(&ws.path("syn.tsv")), "--drop", "everything"]);
    assert_eq!(code(&bad_drop), 2);
}

#[test]
fn divergence_exits_three() {
    let ws = Workspace::new();
    std::fs::write(ws.path("tiny.cfg"), format!("{TINY}lr = 1e308\ndecay = 0\n")).unwrap();
    let out = ws.train("d.synl", &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
}

#[test]
fn gradcheck_passes() {
    let ws = Workspace::new();
    let out = synlstm(&["gradcheck", "--config", s(&ws.path("tiny.cfg")), "--hidden", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let last = text.lines().last().unwrap();
    let err: f64 = last.trim_start_matches("max rel err ").parse().unwrap();
    assert!(err < 1e-4);
}

#[test]
fn experiments_report_requested_sources() {
    let ws = Workspace::new();
    let (cfg, data) = (ws.path("tiny.cfg"), ws.path("syn.tsv"));
    let out = synlstm(&["compare-trees", "--config", s(&cfg), "--data", s(&data), "--sources", "given,random"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("source given") && text.contains("source random"));
    assert!(text.contains("delta given - random"));
    let predicted = format!("given,predicted={}", s(&data));
    let out = synlstm(&["compare-trees", "--config", s(&cfg), "--data", s(&data), "--sources", &predicted]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = ws.path("ablation.csv");
    let out = synlstm(&["ablate", "--config", s(&cfg), "--data", s(&data), "--drop", "pos-embedding", "--report", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ablation pos-embedding"));
    assert!(std::fs::read_to_string(csv).unwrap().starts_with("metric,bucket,value"));
}
