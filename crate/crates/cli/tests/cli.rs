//! End-to-end checks of the `orderinfo` binary: file cardinalities, exit
//! codes and error records, configuration precedence and the external
//! scorer path.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_orderinfo");

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn orderinfo(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ORDERINFO_CONFIG").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn failure(out: &Output) -> (i32, Value) {
    let record: Value = serde_json::from_slice(&out.stderr).unwrap();
    (out.status.code().unwrap(), record["error"].clone())
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Models trained once on the docs corpus, plus the ten probe sentences and
/// their scrambles.
struct Shared {
    dir: PathBuf,
}

impl Shared {
    fn get() -> &'static Shared {
        static SHARED: OnceLock<Shared> = OnceLock::new();
        SHARED.get_or_init(|| {
            let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-shared");
            let _ = fs::remove_dir_all(&dir);
            fs::create_dir_all(&dir).unwrap();
            let docs = dir.join("docs.jsonl");
            ok(orderinfo(&["ingest", "--input", p(&fixture("text/docs_corpus.tsv")), "--out", p(&docs)]));
            ok(orderinfo(&["train-lm", "--sentences", p(&docs), "--out", p(&dir.join("lm.txt"))]));
            ok(orderinfo(&[
                "fit-reorder",
                "--lm",
                p(&dir.join("lm.txt")),
                "--sentences",
                p(&docs),
                "--out",
                p(&dir.join("reorder.json")),
            ]));
            ok(orderinfo(&["ingest", "--input", p(&fixture("text/ten_sentences.tsv")), "--out", p(&dir.join("ten.jsonl"))]));
            ok(orderinfo(&["scramble", "--sentences", p(&dir.join("ten.jsonl")), "--out", p(&dir.join("ten_scrambles.jsonl"))]));
            Shared { dir }
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn internal_pmi(&self) -> PathBuf {
        let out = self.path("ten_pmi.jsonl");
        static DONE: OnceLock<()> = OnceLock::new();
        DONE.get_or_init(|| {
            ok(orderinfo(&[
                "pmi",
                "--sentences",
                p(&self.path("ten.jsonl")),
                "--scrambles",
                p(&self.path("ten_scrambles.jsonl")),
                "--lm",
                p(&self.path("lm.txt")),
                "--reorder",
                p(&self.path("reorder.json")),
                "--out",
                p(&out),
            ]));
        });
        out
    }
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn toml_list(argv: &[&str]) -> String {
    let items: Vec<String> = argv.iter().map(|a| format!("{a:?}")).collect();
    format!("[{}]", items.join(", "))
}

#[test]
fn ten_sentences_give_sixty_pair_rows_and_ten_averages() {
    let s = Shared::get();
    assert_eq!(lines(&s.path("ten_scrambles.jsonl")).len(), 60);
    let rows = lines(&s.internal_pmi());
    assert_eq!(rows.len(), 70);
    let pair_rows = rows.iter().filter(|r| r["seed"].is_u64()).count();
    assert_eq!(pair_rows, 60);
    assert_eq!(rows.iter().filter(|r| r["seed"] == "avg").count(), 10);
    assert!(rows.iter().all(|r| r["pmi_bits"].as_f64().unwrap().is_finite()));
}

#[test]
fn mi_reads_the_pmi_file() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mi.csv");
    ok(orderinfo(&["mi", "--pmi", p(&s.internal_pmi()), "--out", p(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("all,60,"), "{text}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = orderinfo(&["pmi", "--bogus"]);
    let (code, err) = failure(&out);
    assert_eq!(code, 1);
    assert_eq!(err["kind"], "usage");
    assert_eq!(err["code"], 1);
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_input_is_a_usage_error_naming_the_file() {
    let out = orderinfo(&["scramble", "--sentences", "/definitely/not/here.jsonl", "--out", "/tmp/never.jsonl"]);
    let (code, err) = failure(&out);
    assert_eq!(code, 1);
    assert_eq!(err["command"], "scramble");
    assert!(err["message"].as_str().unwrap().contains("/definitely/not/here.jsonl"));
}

#[test]
fn malformed_corpus_is_a_data_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "s1\tgeneric\ttrain\tfine sentence\ns2\tonly two\n").unwrap();
    let out_path = dir.path().join("out/sentences.jsonl");
    let out = orderinfo(&["ingest", "--input", p(&bad), "--out", p(&out_path)]);
    let (code, err) = failure(&out);
    assert_eq!(code, 2);
    assert_eq!(err["kind"], "data");
    assert!(err["message"].as_str().unwrap().contains("line 2"), "{err}");
    assert!(!out_path.exists());
}

#[test]
fn duplicate_sentence_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    fs::write(&a, "s1\tgeneric\ttrain\tone two\ns1\tgeneric\ttrain\tthree four\n").unwrap();
    let out = orderinfo(&["ingest", "--input", p(&a), "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(failure(&out).0, 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scramble]\nkk = 3\n");
    let out = orderinfo(&["--config", p(&cfg), "cfg-gen", "--type", "a", "-n", "1", "--out", p(&dir.path().join("x.txt"))]);
    let (code, err) = failure(&out);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn config_from_the_environment_and_flags_take_precedence() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scramble]\nk = 2\n");
    let out_path = dir.path().join("scr.jsonl");
    let ten = s.path("ten.jsonl");
    let run = |extra: &[&str]| {
        let mut args = extra.to_vec();
        args.extend(["scramble", "--sentences", p(&ten), "--out", p(&out_path)]);
        Command::new(BIN).args(&args).env("ORDERINFO_CONFIG", &cfg).output().unwrap()
    };
    ok(run(&[]));
    assert_eq!(lines(&out_path).len(), 20);
    ok(run(&["--k-scrambles", "3"]));
    assert_eq!(lines(&out_path).len(), 30);
}

#[test]
fn scrambles_follow_the_scramble_seeds_not_the_run_seed() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let shared = fs::read(s.path("ten_scrambles.jsonl")).unwrap();
    let scr = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let ten = s.path("ten.jsonl");
        let mut args = extra.to_vec();
        args.extend(["scramble", "--sentences", p(&ten), "--out", p(&out)]);
        ok(orderinfo(&args));
        fs::read(out).unwrap()
    };
    assert_eq!(scr(&["--seed", "7"], "a.jsonl"), shared);
    let cfg = write_config(dir.path(), "[scramble]\nfirst_seed = 10\n");
    let shifted = scr(&["--config", p(&cfg)], "b.jsonl");
    assert_ne!(shifted, shared);
    let rows: Vec<Value> = String::from_utf8(shifted).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["seed"], 10);
}

#[test]
fn pmi_through_an_internal_scorer_process_is_byte_identical() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let (lm, fit) = (s.path("lm.txt"), s.path("reorder.json"));
    let argv = [BIN, "serve", "--backend", "internal", "--lm", p(&lm), "--reorder", p(&fit)];
    let cfg = write_config(dir.path(), &format!("[scorer]\ncommand = {}\n", toml_list(&argv)));
    let out_path = dir.path().join("pmi.jsonl");
    let summary = ok(orderinfo(&[
        "--config",
        p(&cfg),
        "pmi",
        "--sentences",
        p(&s.path("ten.jsonl")),
        "--scrambles",
        p(&s.path("ten_scrambles.jsonl")),
        "--out",
        p(&out_path),
    ]));
    assert_eq!(fs::read(&out_path).unwrap(), fs::read(s.internal_pmi()).unwrap(), "{summary}");
}

#[test]
fn fixed_log_probabilities_pass_through_unchanged() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let argv = [BIN, "serve", "--fixed-logp", "-10"];
    let cfg = write_config(dir.path(), &format!("[scorer]\ncommand = {}\nops = [\"logp_cond\"]\n", toml_list(&argv)));
    let out_path = dir.path().join("pmi.jsonl");
    ok(orderinfo(&[
        "--config",
        p(&cfg),
        "pmi",
        "--sentences",
        p(&s.path("ten.jsonl")),
        "--scrambles",
        p(&s.path("ten_scrambles.jsonl")),
        "--lm",
        p(&s.path("lm.txt")),
        "--out",
        p(&out_path),
    ]));
    // q is the external -10 bits, p still comes from the internal model.
    let internal = lines(&s.internal_pmi());
    let external = lines(&out_path);
    assert_eq!(internal.len(), external.len());
    for (a, b) in internal.iter().zip(&external) {
        assert_eq!(a["sentence_id"], b["sentence_id"]);
        let pmi = b["pmi_bits"].as_f64().unwrap();
        assert!(pmi > -10.0 + 1.0, "p(s) is tiny, so -10 - log2 p(s) is large: {pmi}");
    }
    let ten = lines(&s.path("ten.jsonl"));
    let id = ten[0]["id"].as_str().unwrap().to_string();
    let first: Vec<f64> = external.iter().filter(|r| r["sentence_id"] == id.as_str()).map(|r| r["pmi_bits"].as_f64().unwrap()).collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]), "every pair of a sentence shares log2 p(s): {first:?}");
}

#[test]
fn scorer_returning_a_fixed_value_for_both_ops_gives_zero_pmi() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let argv = [BIN, "serve", "--fixed-logp", "-10", "--capabilities", "logp_sentence,logp_cond"];
    let cfg = write_config(dir.path(), &format!("[scorer]\ncommand = {}\n", toml_list(&argv)));
    let out_path = dir.path().join("pmi.jsonl");
    let summary = ok(orderinfo(&[
        "--config",
        p(&cfg),
        "pmi",
        "--sentences",
        p(&s.path("ten.jsonl")),
        "--scrambles",
        p(&s.path("ten_scrambles.jsonl")),
        "--out",
        p(&out_path),
    ]));
    let rows = lines(&out_path);
    assert_eq!(rows.len(), 70, "{summary}");
    assert!(rows.iter().all(|r| r["pmi_bits"].as_f64() == Some(0.0)));
}

#[test]
fn garbage_from_the_scorer_is_exit_four() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    let argv = ["sh", "-c", "echo this-is-not-json; sleep 5"];
    let cfg = write_config(dir.path(), &format!("[scorer]\ncommand = {}\ntimeout_ms = 2000\n", toml_list(&argv)));
    let out_path = dir.path().join("pmi.jsonl");
    let out = orderinfo(&[
        "--config",
        p(&cfg),
        "pmi",
        "--sentences",
        p(&s.path("ten.jsonl")),
        "--scrambles",
        p(&s.path("ten_scrambles.jsonl")),
        "--out",
        p(&out_path),
    ]);
    let (code, err) = failure(&out);
    assert_eq!(code, 4, "{err}");
    assert_eq!(err["kind"], "scorer");
    assert!(!out_path.exists());
}

#[test]
fn unreachable_tcp_scorer_is_exit_four() {
    let s = Shared::get();
    let dir = tempfile::tempdir().unwrap();
    // Bind and drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = write_config(dir.path(), &format!("[scorer]\ntcp = \"127.0.0.1:{port}\"\ntimeout_ms = 1000\n"));
    let out = orderinfo(&[
        "--config",
        p(&cfg),
        "pmi",
        "--sentences",
        p(&s.path("ten.jsonl")),
        "--scrambles",
        p(&s.path("ten_scrambles.jsonl")),
        "--out",
        p(&dir.path().join("pmi.jsonl")),
    ]);
    assert_eq!(failure(&out).0, 4);
}

#[test]
fn regress_recovers_the_synthetic_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(orderinfo(&[
        "regress",
        "--consistency",
        p(&fixture("regression/synthetic_consistency.csv")),
        "--out-dir",
        p(dir.path()),
        "--no-compare",
    ]));
    assert!(summary["max_rhat"].as_f64().unwrap() < 1.05, "{summary}");
    let ci_low = summary["beta_pmi"]["ci_low"].as_f64().unwrap();
    let ci_high = summary["beta_pmi"]["ci_high"].as_f64().unwrap();
    assert!(ci_low <= 1.87 && 1.87 <= ci_high, "{summary}");
    for f in ["fit_summary.csv", "rope.csv", "curves.csv", "regression.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn too_few_draws_is_exit_three_with_offenders() {
    let dir = tempfile::tempdir().unwrap();
    let out = orderinfo(&[
        "regress",
        "--consistency",
        p(&fixture("regression/synthetic_consistency.csv")),
        "--out-dir",
        p(dir.path()),
        "--no-compare",
        "--warmup",
        "10",
        "--draws",
        "20",
    ]);
    let (code, err) = failure(&out);
    assert_eq!(code, 3);
    assert_eq!(err["kind"], "convergence");
    let offenders = err["details"]["offenders"].as_array().unwrap();
    assert!(!offenders.is_empty());
    assert!(offenders[0]["parameter"].is_string());
    assert!(dir.path().join("fit_summary.csv").exists());
    assert!(!dir.path().join("regression.json").exists());
}

#[test]
fn fewer_than_four_chains_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = orderinfo(&[
        "--chains",
        "2",
        "regress",
        "--consistency",
        p(&fixture("regression/synthetic_consistency.csv")),
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(failure(&out).0, 1);
}

#[test]
fn cfg_eval_writes_the_accuracy_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cfg.json");
    let summary = ok(orderinfo(&[
        "cfg-eval",
        "--grammar-a",
        p(&fixture("grammars/type_a.cfg")),
        "--grammar-b",
        p(&fixture("grammars/type_b.cfg")),
        "--n-eval",
        "100",
        "--n-train",
        "3000",
        "--n-fit",
        "50",
        "--out",
        p(&out_path),
    ]));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["type_a"]["type_tag"], "A");
    assert_eq!(report["type_b"]["type_tag"], "B");
    assert_eq!(report["type_a"]["per_seed_accuracies"].as_array().unwrap().len(), 6);
    assert_eq!(summary["type_a"], report["type_a"]["mean_exact_match"]);
}

#[test]
fn cfg_gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        ok(orderinfo(&["--seed", seed, "cfg-gen", "--type", "b", "-n", "20", "--out", p(&out)]));
        fs::read_to_string(out).unwrap()
    };
    let a = gen("1", "a.txt");
    assert_eq!(a, gen("1", "b.txt"));
    assert_ne!(a, gen("2", "c.txt"));
    assert_eq!(a.lines().count(), 20);
}

#[test]
fn serve_answers_the_handshake_over_stdio() {
    use std::io::{BufRead, BufReader, Write};
    let mut child = Command::new(BIN)
        .args(["serve", "--fixed-logp", "-3.5"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    writeln!(stdin, r#"{{"op":"hello","version":1}}"#).unwrap();
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let hello: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(hello["ok"], true, "{line}");
    writeln!(stdin, r#"{{"id":1,"op":"logp_sentence","tokens":["a","b"]}}"#).unwrap();
    line.clear();
    stdout.read_line(&mut line).unwrap();
    let reply: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(reply["id"], 1);
    assert_eq!(reply["logp2"], -3.5, "{line}");
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn pipeline_runs_end_to_end_on_the_ten_sentences() {
    // Ten probe sentences and nothing to train on: the LM stage must refuse.
    let dir = tempfile::tempdir().unwrap();
    let out = orderinfo(&["pipeline", "--corpus", p(&fixture("text/ten_sentences.tsv")), "--out-dir", p(dir.path())]);
    let (code, err) = failure(&out);
    assert_eq!(code, 2, "{err}");
    assert!(!dir.path().join("lm.txt").exists());
}
