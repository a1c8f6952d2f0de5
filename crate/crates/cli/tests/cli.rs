use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use tinyasr::am::{write_features, Posteriorgram};
use tinyasr::ngram::{read_arpa, NGramModel};
use tinyasr::Matrix;

const PHONES: &str = "a e i o u k t s n";
const LEXICON: &str = "\
kat k a t
tosa t o s a
nun n u n
sik s i k
kasi k a s i
";
const CORPUS: &str = "\
kat tosa
kat tosa nun
sik kasi
nun kat
tosa sik kasi
kat $CONTACTS
kasi nun tosa
";

fn tinyasr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tinyasr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tinyasr(args);
    assert!(
        out.status.success(),
        "tinyasr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("phones.txt"), PHONES).unwrap();
        std::fs::write(dir.path().join("lexicon.txt"), LEXICON).unwrap();
        std::fs::write(dir.path().join("corpus.txt"), CORPUS).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// lm-train then graph-build with exact backoff expansion.
    fn build(&self, tag: &str) -> (PathBuf, PathBuf) {
        let lm = self.path(&format!("lm{tag}.arpa"));
        let graph = self.path(&format!("graph{tag}.egr"));
        ok(&["lm-train", s(&self.path("corpus.txt")), "--order", "2", "--output", s(&lm)]);
        ok(&[
            "graph-build",
            "--lexicon",
            s(&self.path("lexicon.txt")),
            "--lm",
            s(&lm),
            "--phones",
            s(&self.path("phones.txt")),
            "--backoff",
            "expanded",
            "--output",
            s(&graph),
        ]);
        (lm, graph)
    }
}

fn phone_ids(word_phones: &str) -> Vec<usize> {
    let inventory: Vec<&str> = PHONES.split_whitespace().collect();
    word_phones
        .split_whitespace()
        .map(|p| inventory.iter().position(|q| *q == p).unwrap() + 1)
        .collect()
}

/// Noisy posteriors: each label held for `hold` steps, separated by one blank-peaked step.
fn posteriors_for(labels: &[usize], hold: usize, rng: &mut ChaCha8Rng) -> Posteriorgram {
    let n = PHONES.split_whitespace().count() + 1;
    let mut rows = Vec::new();
    let mut peaked = |target: usize, rng: &mut ChaCha8Rng| {
        let mut row: Vec<f32> = (0..n).map(|_| rng.random_range(0.01f32..0.05)).collect();
        row[target] = rng.random_range(0.6f32..0.8);
        let sum: f32 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        rows.push(row);
    };
    peaked(0, rng);
    for &l in labels {
        for _ in 0..hold {
            peaked(l, rng);
        }
        peaked(0, rng);
    }
    Posteriorgram::from_rows(&rows).unwrap()
}

/// Best strict-CTC alignment cost (-log10) of one label sequence.
fn ctc_cost(post: &Posteriorgram, labels: &[usize]) -> f64 {
    let mut ext = vec![0usize];
    for &l in labels {
        ext.push(l);
        ext.push(0);
    }
    let cost = |t: usize, k: usize| -(post.get(t, ext[k]) as f64).log10();
    let mut prev = vec![f64::INFINITY; ext.len()];
    prev[0] = cost(0, 0);
    if ext.len() > 1 {
        prev[1] = cost(0, 1);
    }
    for t in 1..post.num_steps() {
        let mut cur = vec![f64::INFINITY; ext.len()];
        for k in 0..ext.len() {
            let mut best = prev[k];
            if k >= 1 {
                best = best.min(prev[k - 1]);
            }
            if k >= 2 && ext[k] != 0 && ext[k] != ext[k - 2] {
                best = best.min(prev[k - 2]);
            }
            cur[k] = best + cost(t, k);
        }
        prev = cur;
    }
    let last = ext.len() - 1;
    prev[last].min(if last >= 1 { prev[last - 1] } else { f64::INFINITY })
}

/// Brute force over word strings of up to three lexicon words.
fn oracle(post: &Posteriorgram, lm: &NGramModel) -> (Vec<String>, f64) {
    let words: Vec<(&str, Vec<usize>)> = LEXICON
        .lines()
        .map(|l| {
            let (w, p) = l.split_once(' ').unwrap();
            (w, phone_ids(p))
        })
        .collect();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut seqs: Vec<Vec<usize>> = vec![vec![]];
    for len in 1..=3 {
        let mut next = Vec::new();
        for s in seqs.iter().filter(|s| s.len() == len - 1) {
            for i in 0..words.len() {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        seqs.extend(next);
    }
    for seq in seqs {
        let labels: Vec<usize> = seq.iter().flat_map(|&i| words[i].1.clone()).collect();
        let ids: Vec<_> = seq.iter().map(|&i| lm.vocab().id(words[i].0).unwrap()).collect();
        let total = ctc_cost(post, &labels) - lm.sentence_log_prob(&ids);
        if total < best.1 {
            best = (seq.iter().map(|&i| words[i].0.to_string()).collect(), total);
        }
    }
    best
}

fn write_posteriors(path: &Path, post: &Posteriorgram) {
    let mut f = std::fs::File::create(path).unwrap();
    post.write_to(&mut f).unwrap();
}

fn decode_json(args: &[&str]) -> Vec<Value> {
    ok(args)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn pipeline_matches_oracle() {
    let fx = Fixture::new();
    let (lm_path, graph) = fx.build("");
    let lm = read_arpa(std::io::BufReader::new(std::fs::File::open(&lm_path).unwrap())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let utterances = ["kat tosa", "sik kasi", "nun kat", "kasi nun tosa"];
    let mut inputs = Vec::new();
    let mut expected = Vec::new();
    for (i, u) in utterances.iter().enumerate() {
        let labels: Vec<usize> = u
            .split_whitespace()
            .flat_map(|w| {
                let line = LEXICON.lines().find(|l| l.split_whitespace().next() == Some(w)).unwrap();
                phone_ids(line.split_once(' ').unwrap().1)
            })
            .collect();
        let post = posteriors_for(&labels, 1 + i % 2, &mut rng);
        let path = fx.path(&format!("utt{i}.epg"));
        write_posteriors(&path, &post);
        expected.push(oracle(&post, &lm));
        inputs.push(path);
    }
    let mut args = vec!["decode", "--graph", s(&graph), "--beam", "1000", "--max-active", "100000"];
    args.extend(inputs.iter().map(|p| s(p)));
    let records = decode_json(&args);
    assert_eq!(records.len(), utterances.len());
    for ((rec, (words, cost)), u) in records.iter().zip(&expected).zip(&utterances) {
        assert_eq!(rec["transcript"], words.join(" "), "utterance {u}");
        assert_eq!(rec["transcript"], *u);
        assert!(rec["success"].as_bool().unwrap());
        let score = rec["score"].as_f64().unwrap();
        assert!((score - cost).abs() < 1e-6 * cost.max(1.0), "{score} vs {cost}");
    }

    let mut threaded = args.clone();
    threaded.extend(["--threads", "3"]);
    let again = decode_json(&threaded);
    for (a, b) in records.iter().zip(&again) {
        assert_eq!(a["transcript"], b["transcript"]);
        assert_eq!(a["score"], b["score"]);
    }
}

#[test]
fn contact_injection_end_to_end() {
    let fx = Fixture::new();
    let (_, graph) = fx.build("");
    std::fs::write(fx.path("contacts.tsv"), "# name phones weight\nnika\tn i k a\t0\nteo\tt e o\t0\n").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let labels: Vec<usize> = phone_ids("k a t n i k a");
    let post = fx.path("call.epg");
    write_posteriors(&post, &posteriors_for(&labels, 2, &mut rng));

    let before = decode_json(&["decode", "--graph", s(&graph), s(&post)]);
    assert_ne!(before[0]["transcript"], "kat nika");

    let overlay = fx.path("contacts.eco");
    ok(&[
        "inject-contacts",
        "--graph",
        s(&graph),
        "--contacts",
        s(&fx.path("contacts.tsv")),
        "--output",
        s(&overlay),
    ]);
    for contacts in [fx.path("contacts.tsv"), overlay] {
        let after = decode_json(&["decode", "--graph", s(&graph), "--contacts", s(&contacts), s(&post)]);
        assert_eq!(after[0]["transcript"], "kat nika");
    }
}

#[test]
fn subcommands_are_idempotent() {
    let fx = Fixture::new();
    let (lm1, g1) = fx.build("1");
    let (lm2, g2) = fx.build("2");
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&lm1), read(&lm2));
    assert_eq!(read(&g1), read(&g2));

    for tag in ["1", "2"] {
        let p = |n: &str| fx.path(&format!("{n}{tag}"));
        ok(&["lm-prune", "--lm", s(&lm1), "--threshold", "1e-3", "--output", s(&p("pruned"))]);
        ok(&["lm-compile-louds", "--lm", s(&lm1), "--output", s(&p("louds"))]);
        ok(&[
            "lm-interpolate",
            "--lm",
            s(&lm1),
            s(&p("pruned")),
            "--mode",
            "bayesian",
            "--weights",
            "0.3,0.7",
            "--output",
            s(&p("mixed")),
        ]);
        ok(&[
            "model-init",
            "--topology",
            "compressed",
            "--layers",
            "1",
            "--cells",
            "16",
            "--seed",
            "5",
            "--output",
            s(&p("am")),
        ]);
        ok(&["quantize-model", "--model", s(&p("am")), "--output", s(&p("amq"))]);
    }
    for name in ["pruned", "louds", "mixed", "am", "amq"] {
        assert_eq!(read(&fx.path(&format!("{name}1"))), read(&fx.path(&format!("{name}2"))), "{name}");
    }
}

#[test]
fn quantized_model_ratio() {
    let fx = Fixture::new();
    let (float, quant) = (fx.path("am.eam"), fx.path("amq.eam"));
    ok(&["model-init", "--topology", "reference", "--seed", "1", "--output", s(&float)]);
    ok(&["quantize-model", "--model", s(&float), "--output", s(&quant)]);
    let size = |p: &Path| {
        let v: Value = serde_json::from_str(&ok(&["size-report", "--model", s(p), "--json"])).unwrap();
        v["components"]["acoustic model"].as_u64().unwrap()
    };
    let ratio = size(&quant) as f64 / size(&float) as f64;
    assert!((0.24..=0.27).contains(&ratio), "ratio {ratio}");
}

#[test]
fn size_report_is_additive() {
    let fx = Fixture::new();
    let (lm, graph) = fx.build("");
    let louds = fx.path("lm.eld");
    ok(&["lm-compile-louds", "--lm", s(&lm), "--output", s(&louds)]);
    std::fs::write(fx.path("contacts.tsv"), "nika\tn i k a\n").unwrap();
    let overlay = fx.path("contacts.eco");
    ok(&[
        "inject-contacts",
        "--graph",
        s(&graph),
        "--contacts",
        s(&fx.path("contacts.tsv")),
        "--output",
        s(&overlay),
    ]);
    let am = fx.path("am.eam");
    ok(&["model-init", "--topology", "compressed", "--layers", "1", "--cells", "16", "--output", s(&am)]);

    let files = [
        ("acoustic model", am.clone()),
        ("decoder graph", graph.clone()),
        ("rescoring LM", louds.clone()),
        ("lexicon", fx.path("lexicon.txt")),
        ("personalization overlay", overlay.clone()),
    ];
    let out = ok(&[
        "size-report",
        "--model",
        s(&am),
        "--graph",
        s(&graph),
        "--rescore-lm",
        s(&louds),
        "--lexicon",
        s(&fx.path("lexicon.txt")),
        "--contacts",
        s(&overlay),
        "--json",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let mut sum = 0;
    for (name, path) in &files {
        let bytes = std::fs::metadata(path).unwrap().len();
        assert_eq!(v["components"][name].as_u64(), Some(bytes), "{name}");
        sum += bytes;
    }
    assert_eq!(v["total"].as_u64(), Some(sum));

    let table = ok(&["size-report", "--model", s(&am), "--graph", s(&graph)]);
    let last = table.lines().last().unwrap();
    assert!(last.starts_with("total"));
    let total: u64 = last.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(total, std::fs::metadata(&am).unwrap().len() + std::fs::metadata(&graph).unwrap().len());
}

#[test]
fn features_decode_and_bench() {
    let fx = Fixture::new();
    std::fs::write(fx.path("lex41.txt"), "ba b aa\nab aa b\n").unwrap();
    std::fs::write(fx.path("c41.txt"), "ba ab\nab ba\n").unwrap();
    let lm = fx.path("c41.arpa");
    ok(&["lm-train", s(&fx.path("c41.txt")), "--order", "2", "--output", s(&lm)]);
    let graph = fx.path("g41.egr");
    ok(&["graph-build", "--lexicon", s(&fx.path("lex41.txt")), "--lm", s(&lm), "--output", s(&graph)]);
    let (am, amq) = (fx.path("am.eam"), fx.path("amq.eam"));
    ok(&["model-init", "--topology", "compressed", "--layers", "2", "--cells", "32", "--output", s(&am)]);
    ok(&["quantize-model", "--model", s(&am), "--output", s(&amq)]);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let feats = Matrix::from_fn(60, 40, |_, _| rng.random_range(-1.0f32..1.0));
    let fpath = fx.path("utt.eft");
    write_features(&mut std::fs::File::create(&fpath).unwrap(), &feats).unwrap();

    let recs = decode_json(&["decode", "--graph", s(&graph), "--model", s(&amq), "--rescore-lm", s(&lm), s(&fpath)]);
    assert_eq!(recs.len(), 1);
    assert!(recs[0]["rtf"].as_f64().unwrap() >= 0.0);

    let out = ok(&[
        "bench",
        "--model",
        s(&amq),
        "--graph",
        s(&graph),
        "--repetitions",
        "2",
        "--compare-float",
        s(&fpath),
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    for key in ["rt50", "acoustic_rt50", "float_rt50", "decode_rt50"] {
        assert!(v[key].as_f64().unwrap() > 0.0, "{key}");
    }
}

#[test]
fn bad_magic_names_the_file() {
    let fx = Fixture::new();
    let junk = fx.path("junk.bin");
    std::fs::write(&junk, b"NOPE this is not a model").unwrap();
    for args in [
        vec!["quantize-model", "--model", s(&junk), "--output", "/dev/null"],
        vec!["decode", "--graph", s(&junk), s(&junk)],
        vec!["lm-compile-louds", "--lm", s(&junk), "--output", "/dev/null"],
    ] {
        let out = tinyasr(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("junk.bin"), "{err}");
    }

    let (_, graph) = fx.build("");
    let out = tinyasr(&["decode", "--graph", s(&graph), s(&junk)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.bin"));
}

#[test]
fn usage_errors() {
    let out = tinyasr(&["decode", "--no-such-flag", "x.epg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));

    let out = tinyasr(&[
        "lm-interpolate",
        "--lm",
        "a.arpa",
        "--weights",
        "1",
        "--dev",
        "d.txt",
        "--output",
        "o.arpa",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = tinyasr(&["lm-interpolate", "--lm", "a.arpa", "--mode", "cubic", "--output", "o.arpa"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_flags() {
    let help = ok(&["decode", "--help"]);
    for flag in ["--graph", "--model", "--rescore-lm", "--contacts", "--bias-strength", "--beam", "--max-active", "--acoustic-scale"] {
        assert!(help.contains(flag), "{flag}");
    }
    let help = ok(&["lm-interpolate", "--help"]);
    assert!(help.contains("--mode") && help.contains("bayesian"));
}
