use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bitext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitext")).current_dir(dir).args(args).output().unwrap()
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if p.is_dir() {
            files.extend(snapshot(&p).into_iter().map(|(k, v)| (format!("{name}/{k}"), v)));
        } else {
            files.insert(name, std::fs::read(&p).unwrap());
        }
    }
    files
}

const TEXT: &str = "The harbour was quiet, the crew asleep.\n\nAt dawn the vessel left, carrying 12 crates.";

#[test]
fn identical_texts_align_at_zero_cost() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), TEXT).unwrap();
    std::fs::write(dir.path().join("b.txt"), TEXT).unwrap();
    let out = bitext(dir.path(), &["--archive", "arc", "align", "--src", "a.txt", "--tgt", "b.txt", "--id", "same"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = json_lines(&out);
    assert_eq!(lines[0]["bitext"], "same");
    assert_eq!(lines[0]["total_cost"], 0.0);
}

#[test]
fn stats_on_a_raw_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.txt"), "a b a").unwrap();
    let out = bitext(dir.path(), &["stats", "--src", "t.txt"]);
    assert!(out.status.success());
    let stats = &json_lines(&out)[0];
    assert_eq!(stats["token_count"], 3);
    assert_eq!(stats["type_count"], 2);
    assert_eq!(stats["hapax_type_ratio"], 0.5);
    let out = bitext(dir.path(), &["stats", "--src", "t.txt", "--frequencies"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a\t2\nb\t1\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // configuration error
    std::fs::write(dir.path().join("bad.conf"), "align.nonsense = 1\n").unwrap();
    let out = bitext(dir.path(), &["--config", "bad.conf", "--archive", "arc", "stats"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    // missing input
    let out = bitext(dir.path(), &["--archive", "arc", "align", "--src", "none.txt", "--tgt", "none.txt"]);
    assert_eq!(out.status.code(), Some(3));
    let out = bitext(dir.path(), &["--archive", "missing", "forks"]);
    assert_eq!(out.status.code(), Some(3));
    // integrity failure
    std::fs::write(dir.path().join("a.txt"), TEXT).unwrap();
    let out = bitext(dir.path(), &["--archive", "arc", "align", "--src", "a.txt", "--tgt", "a.txt"]);
    assert!(out.status.success());
    let links = dir.path().join("arc/links.tsv");
    let text = std::fs::read_to_string(&links).unwrap();
    std::fs::write(&links, text.replacen('\t', "\tx", 1)).unwrap();
    let out = bitext(dir.path(), &["--archive", "arc", "stats"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("links.tsv"));
}

#[test]
fn query_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), TEXT).unwrap();
    assert!(bitext(dir.path(), &["--archive", "arc", "align", "--src", "a.txt", "--tgt", "a.txt", "--id", "x"]).status.success());
    assert!(bitext(dir.path(), &["--archive", "arc", "assign"]).status.success());
    let out = bitext(dir.path(), &["--archive", "arc", "query", "counterwords", "--word", "zebra"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_lines(&out)[0]["error"]["code"], "not_found");
    let out = bitext(dir.path(), &["--archive", "arc", "query", "countertext", "--bitext", "x", "--start", "5", "--end", "999"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bitext(dir.path(), &["--archive", "arc", "query", "concordance", "--term", "vessel"]);
    assert!(out.status.success());
    assert_eq!(json_lines(&out)[0]["total"], 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let synth = ["synth", "--seed", "3", "--src-out", "s.txt", "--tgt-out", "t.txt", "--gold-out", "g.tsv"];
    assert!(bitext(dir.path(), &synth).status.success());
    let pipeline: [&[&str]; 4] = [
        &["--archive", "arc", "align", "--src", "s.txt", "--tgt", "t.txt", "--id", "syn"],
        &["--archive", "arc", "assign", "--gold", "g.tsv"],
        &["--archive", "arc", "phrases"],
        &["--archive", "arc", "forks"],
    ];
    let mut outputs = Vec::new();
    for step in pipeline {
        let out = bitext(dir.path(), step);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(out.stdout);
    }
    let first = snapshot(&dir.path().join("arc"));
    assert!(first.contains_key("manifest.tsv"));
    for (step, previous) in pipeline.iter().zip(&outputs) {
        let out = bitext(dir.path(), step);
        assert_eq!(&out.stdout, previous, "{step:?}");
    }
    assert_eq!(snapshot(&dir.path().join("arc")), first);
    // the synthesizer itself is deterministic
    let before = std::fs::read(dir.path().join("s.txt")).unwrap();
    assert!(bitext(dir.path(), &synth).status.success());
    assert_eq!(std::fs::read(dir.path().join("s.txt")).unwrap(), before);
}
