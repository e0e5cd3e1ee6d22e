use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::{json, Value};

fn bench() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini-benchmark")
}

fn vocab() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/vocab/dbpedia-properties.tsv")
}

fn mus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mus")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mus(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    mus(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config() -> String {
    bench().join("config.json").display().to_string()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn pipeline_writes_all_artifacts_and_prints_table() {
    let out = tempfile::tempdir().unwrap();
    let res = ok(&["pipeline", "--config", &config(), "--out", s(out.path())]);
    assert_eq!(
        sorted_files(out.path()),
        ["calibration.json", "rankings.csv", "report.json", "split.json"]
    );
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().contains("MAP@10"));
    let report = json_file(&out.path().join("report.json"));
    assert_eq!(report["k"], 10);
    let split = json_file(&out.path().join("split.json"));
    assert_eq!(split["test_topics"].as_array().unwrap().len(), 2);
    assert_eq!(split["eval_topics"].as_array().unwrap().len(), 4);

    let csv = ok(&["pipeline", "--config", &config(), "--out", s(out.path()), "--csv"]);
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert!(csv.starts_with("scenario,enrichment,threshold"));
    assert!(csv.lines().nth(1).unwrap().starts_with("td,base,"));
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["calibrate", "--config", &config(), "--out", s(a.path()), "--seed", "1"]);
    ok(&["calibrate", "--config", &config(), "--out", s(b.path()), "--seed", "2"]);
    let (sa, sb) = (json_file(&a.path().join("split.json")), json_file(&b.path().join("split.json")));
    assert_eq!(sa["seed"], 1);
    assert_ne!(sa["test_topics"], sb["test_topics"]);
}

#[test]
fn stage_commands_reproduce_pipeline() {
    let (p, st) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["pipeline", "--config", &config(), "--out", s(p.path())]);
    ok(&["calibrate", "--config", &config(), "--out", s(st.path())]);
    ok(&["evaluate", "--config", &config(), "--out", s(st.path())]);
    let cal = st.path().join("calibration.json");
    ok(&[
        "rank",
        "--config",
        &config(),
        "--out",
        s(st.path()),
        "--split",
        "eval",
        "--calibration",
        s(&cal),
    ]);
    for f in ["split.json", "calibration.json", "report.json", "rankings.csv"] {
        assert_eq!(fs::read(p.path().join(f)).unwrap(), fs::read(st.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn tg_with_zero_topic_weight_reduces_to_td() {
    let (td, tg) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["pipeline", "--config", &config(), "--out", s(td.path()), "--scenario", "td"]);
    ok(&[
        "pipeline",
        "--config",
        &config(),
        "--out",
        s(tg.path()),
        "--scenario",
        "tg",
        "--topic-weight",
        "0",
    ]);
    let (ctd, ctg) = (
        json_file(&td.path().join("calibration.json")),
        json_file(&tg.path().join("calibration.json")),
    );
    for key in ["threshold", "j_statistic", "counts", "curve"] {
        assert_eq!(ctd[key], ctg[key], "{key}");
    }
    let (rtd, rtg) = (json_file(&td.path().join("report.json")), json_file(&tg.path().join("report.json")));
    for key in [
        "counts",
        "accuracy_overall",
        "accuracy_pos",
        "accuracy_neg",
        "precision_overall",
        "precision_pos",
        "precision_neg",
    ] {
        assert_eq!(rtd[key], rtg[key], "{key}");
    }
    // restricted to each query's own topic, the TG ranking is the TD ranking
    let topic_of = |id: &str| {
        id.trim_end_matches(|c: char| c.is_ascii_digit())
            .trim_end_matches("Query")
            .trim_end_matches('C')
            .to_string()
    };
    let rows = |dir: &Path| -> Vec<(String, String)> {
        fs::read_to_string(dir.join("rankings.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].to_string())
            })
            .collect()
    };
    let (tg_rows, td_rows) = (rows(tg.path()), rows(td.path()));
    let queries: std::collections::BTreeSet<&String> = td_rows.iter().map(|(q, _)| q).collect();
    for q in queries {
        let of = |rows: &[(String, String)]| -> Vec<String> { rows.iter().filter(|(r, _)| r == q).map(|(_, c)| c.clone()).collect() };
        let same: Vec<String> = of(&tg_rows).into_iter().filter(|c| topic_of(c) == topic_of(q)).collect();
        let td_list = of(&td_rows);
        assert!(!same.is_empty());
        assert_eq!(same, td_list[..same.len()], "{q}");
    }
}

#[test]
fn ingest_writes_turtle_and_is_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let lake = bench().join("lake");
    ok(&["ingest", s(&lake), "--out", s(a.path())]);
    ok(&[
        "ingest",
        s(&lake),
        "--out",
        s(b.path()),
        "--manifest",
        s(&lake.join("manifest.json")),
    ]);
    let files = sorted_files(a.path());
    assert_eq!(files.iter().filter(|f| f.ends_with(".ttl")).count(), 42);
    assert!(files.contains(&"catalog.json".to_string()));
    for f in &files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let ttl = fs::read_to_string(a.path().join("CensusQuery.ttl")).unwrap();
    assert!(ttl.contains("<http://metaUnionSearch/datasets/CensusQuery>"));
    assert!(ttl.contains("rdfs:label \"MaritalStatus\""));
}

#[test]
fn turtle_catalog_runs_like_csv_catalog() {
    let (ttl, a, b) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    ok(&["ingest", s(&bench().join("lake")), "--out", s(ttl.path())]);
    ok(&["pipeline", "--config", &config(), "--out", s(a.path())]);
    ok(&["pipeline", "--config", &config(), "--out", s(b.path()), "--catalog", s(ttl.path())]);
    for f in ["split.json", "calibration.json", "report.json", "rankings.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn enrich_base_leaves_files_unchanged() {
    let (ttl, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["ingest", s(&bench().join("lake")), "--out", s(ttl.path())]);
    ok(&["enrich", s(ttl.path()), "--enrichment", "base", "--out", s(out.path())]);
    for f in sorted_files(ttl.path()) {
        assert_eq!(
            fs::read(ttl.path().join(&f)).unwrap(),
            fs::read(out.path().join(&f)).unwrap(),
            "{f}"
        );
    }
}

const PSYCHOLOGY_HEADER: &str = "Gender,Age,EducationLevel,Occupation,MaritalStatus,HasChildren\n";

#[test]
fn enrich_full_produces_typed_and_linked_columns() {
    let (lake, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    fs::write(lake.path().join("Psychology_UEA3GE8N.csv"), PSYCHOLOGY_HEADER).unwrap();
    fs::write(
        lake.path().join("manifest.json"),
        r#"{"Psychology_UEA3GE8N.csv": {"topic": "psychology", "role": "query"}}"#,
    )
    .unwrap();
    ok(&[
        "enrich",
        s(lake.path()),
        "--enrichment",
        "dtypes+dbpedia",
        "--vocab",
        s(&vocab()),
        "--out",
        s(out.path()),
    ]);
    let ttl = fs::read_to_string(out.path().join("PsychologyUEA3GE8N.ttl")).unwrap();
    assert!(ttl.contains("dcterms:subject \"psychology\""));
    assert!(ttl.contains("dcterms:title \"Psychology_UEA3GE8N.csv\""));
    assert_eq!(ttl.matches("rdfs:label").count(), 6);
    assert_eq!(ttl.matches("dsv:columnProperty").count(), 6);
    assert!(ttl.contains("dcterms:type \"gender\""));
    assert!(ttl.contains("dcterms:type \"status\""));
    assert!(ttl.contains("dsv:columnProperty dbpedia:"));
}

#[test]
fn embed_writes_one_record_per_dataset() {
    let out = tempfile::tempdir().unwrap();
    ok(&["embed", "--config", &config(), "--out", s(out.path()), "--scenario", "tg"]);
    let text = fs::read_to_string(out.path().join("vectors.jsonl")).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 42);
    for r in &records {
        assert_eq!(r["scenario"], "tg");
        assert_eq!(r["dim"], 256);
        assert_eq!(r["vector"].as_array().unwrap().len(), 256);
        assert_eq!(r["config_digest"].as_str().unwrap().len(), 16);
    }
}

#[test]
fn input_errors_exit_2() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&["ingest", s(empty.path()), "--out", s(out.path())]), 2);
    assert_eq!(
        code(&[
            "enrich",
            "--config",
            &config(),
            "--enrichment",
            "everything",
            "--out",
            s(out.path())
        ]),
        2
    );
    assert_eq!(code(&["pipeline", "--config", "/nonexistent/config.json"]), 2);
    assert_eq!(code(&["pipeline", "--config", &config(), "--endpoint", "http://127.0.0.1:9"]), 2);
    assert_eq!(code(&["pipeline", "--config", &config(), "--provider", "http"]), 2);
    assert_eq!(code(&["pipeline", "--config", &config(), "--k", "0"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let bad_gt = out.path().join("gt.csv");
    fs::write(&bad_gt, "query_table,candidate_table,label\ncensus_query.csv,nowhere.csv,1\n").unwrap();
    assert_eq!(
        code(&[
            "pipeline",
            "--config",
            &config(),
            "--ground-truth",
            s(&bad_gt),
            "--out",
            s(out.path())
        ]),
        2
    );
}

#[test]
fn one_class_calibration_exits_4() {
    let out = tempfile::tempdir().unwrap();
    let gt = out.path().join("gt.csv");
    let all_positive: String = fs::read_to_string(bench().join("groundtruth.csv")).unwrap().replace(",0\n", ",1\n");
    fs::write(&gt, all_positive).unwrap();
    let res = mus(&["pipeline", "--config", &config(), "--ground-truth", s(&gt), "--out", s(out.path())]);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stderr).contains("degenerate calibration set"));
}

fn free_port_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}

#[test]
fn dead_embedding_endpoint_exits_3() {
    let out = tempfile::tempdir().unwrap();
    let url = free_port_url();
    let res = mus(&[
        "pipeline",
        "--config",
        &config(),
        "--provider",
        "http",
        "--endpoint",
        &url,
        "--out",
        s(out.path()),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("after 3 attempt(s)"));
}

/// Minimal embedding service: bag of lowercase letters, unnormalized.
fn start_embed_stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let resp = if path == "/embed" {
                    let req: Value = serde_json::from_slice(&body).unwrap();
                    let vectors: Vec<Vec<f64>> = req["texts"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|t| {
                            let mut v = vec![0.0; 26];
                            for c in t.as_str().unwrap().to_ascii_lowercase().bytes().filter(u8::is_ascii_lowercase) {
                                v[(c - b'a') as usize] += 2.0;
                            }
                            v
                        })
                        .collect();
                    json!({"vectors": vectors, "dim": 26, "model": "letters-v1"})
                } else {
                    json!({"status": "ok", "model": "letters-v1", "dim": 26})
                };
                let text = resp.to_string();
                let mut stream = stream;
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
            });
        }
    });
    url
}

#[test]
fn http_provider_completes_the_mini_benchmark() {
    let url = start_embed_stub();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        ok(&[
            "pipeline",
            "--config",
            &config(),
            "--provider",
            "http",
            "--endpoint",
            &url,
            "--out",
            s(dir.path()),
        ]);
    }
    for f in ["split.json", "calibration.json", "report.json", "rankings.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let report = json_file(&a.path().join("report.json"));
    assert!(report["map_at_k"].as_f64().unwrap() > 0.0);
}
