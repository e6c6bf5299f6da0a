use std::collections::BTreeMap;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_layedit"));
    c.env_remove("LAYEDIT_BACKBONE_URL");
    c
}

fn handbuilt() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/handbuilt.json")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn synth(dir: &Path, name: &str, pages: usize, c: f64, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = run(bin()
        .args(["synth", "--pages", &pages.to_string(), "--copy-fraction", &c.to_string()])
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(&path));
    assert!(out.status.success());
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn references(spans: &Path) -> BTreeMap<String, String> {
    read_json(spans)["pages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let md = p["reference_markdown"].as_str().unwrap();
            let normalized: Vec<&str> = md.split_whitespace().collect();
            (p["page_id"].as_str().unwrap().to_owned(), normalized.join(" "))
        })
        .collect()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/generate")
}

#[test]
fn transform_round_trips_references() {
    let tmp = tempfile::tempdir().unwrap();
    for spans in [handbuilt(), synth(tmp.path(), "s.json", 5, 0.5, 3)] {
        let out = tmp.path().join("out");
        let _ = fs::remove_dir_all(&out);
        assert!(run(bin().arg("transform").arg(&spans).arg("--out").arg(&out)).status.success());
        for (id, reference) in references(&spans) {
            let md = fs::read_to_string(out.join(format!("{id}.md"))).unwrap();
            assert_eq!(md, reference, "{id}");
            let sidecar = read_json(&out.join(format!("{id}.transcript.json")));
            assert_eq!(sidecar["status"], "ok");
            assert!(sidecar["transcript"]["tokens"][0]["provenance"].is_string());
        }
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let spans = synth(tmp.path(), "s.json", 6, 0.35, 9);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(bin().arg("transform").arg(&spans).arg("--out").arg(&a)).status.success());
    assert!(run(bin()
        .arg("transform")
        .arg(&spans)
        .args(["--batch-size", "4", "--threads", "2", "--out"])
        .arg(&b))
    .status
    .success());
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn no_edit_replays_the_raw_script() {
    let tmp = tempfile::tempdir().unwrap();
    let spans = handbuilt();
    let refs = references(&spans);
    let id = "hb-article-01";
    let script = tmp.path().join("script.json");
    let body = serde_json::json!({
        id: refs[id],
        "deviations": [{"page_id": id, "at_word": 2, "insert": ["injected", "words"]}],
    });
    fs::write(&script, body.to_string()).unwrap();
    let out = tmp.path().join("out");
    assert!(run(bin()
        .arg("transform")
        .arg(&spans)
        .arg("--no-edit")
        .arg("--script")
        .arg(&script)
        .arg("--out")
        .arg(&out))
    .status
    .success());
    let words: Vec<&str> = refs[id].split(' ').collect();
    let expected = [&words[..2], &["injected", "words"], &words[2..]].concat().join(" ");
    assert_eq!(fs::read_to_string(out.join(format!("{id}.md"))).unwrap(), expected);
    // Pages absent from the script fall back to their reference.
    assert_eq!(fs::read_to_string(out.join("hb-table-03.md")).unwrap(), refs["hb-table-03"]);
    let t = &read_json(&out.join(format!("{id}.transcript.json")))["transcript"];
    assert_eq!(t["copied_tokens"], 0);
    assert_eq!(t["generated_steps"].as_u64().unwrap() as usize, words.len() + 2);
}

#[test]
fn missing_endpoint_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = run(bin().arg("transform").arg(handbuilt()).args(["--backbone", "remote", "--out"]).arg(&out));
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("endpoint"));
    assert!(!out.exists());
}

#[test]
fn unreachable_endpoint_from_env_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = run(bin()
        .env("LAYEDIT_BACKBONE_URL", dead_url())
        .arg("transform")
        .arg(handbuilt())
        .args(["--backbone", "remote", "--out"])
        .arg(&out));
    assert_eq!(res.status.code(), Some(2));
    let summary = read_json(&out.join("summary.json"));
    let rows = summary.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r["status"] == "error"));
    let ids: Vec<&str> = rows.iter().map(|r| r["page_id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(!out.join("hb-article-01.md").exists());
}

#[test]
fn eval_of_identical_dirs_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run(bin().arg("transform").arg(handbuilt()).arg("--out").arg(&out)).status.success());
    let report = tmp.path().join("report.json");
    let res = run(bin().arg("eval").arg("--pred").arg(&out).arg("--ref").arg(&out).arg("--out").arg(&report));
    assert!(res.status.success());
    let r = read_json(&report);
    assert_eq!(r["pages"].as_array().unwrap().len(), 6);
    let mean = &r["mean"];
    assert_eq!(mean["edit_dist_ratio"], 0.0);
    for k in ["bleu", "meteor", "precision", "recall", "f1"] {
        assert_eq!(mean[k], 1.0, "{k}");
    }
}

#[test]
fn eval_rejects_mismatched_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    fs::write(a.join("p1.md"), "x").unwrap();
    fs::write(b.join("p2.md"), "x").unwrap();
    let res = run(bin().arg("eval").arg("--pred").arg(&a).arg("--ref").arg(&b));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn queue_dump_matches_debug_format() {
    let res = run(bin().args(["queue", "build"]).arg(handbuilt()).arg("--dump"));
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    for line in lines {
        let q: Value = serde_json::from_str(line).unwrap();
        assert!(q["page_id"].is_string());
        let actions = q["actions"].as_array().unwrap();
        assert_eq!(actions[0]["type"], "trigger");
        assert_eq!(actions.last().unwrap()["type"], "trigger");
        for a in actions {
            assert!(a["stop"].is_array());
            match a["type"].as_str().unwrap() {
                "trigger" => assert_eq!(a.as_object().unwrap().len(), 2),
                "copy" => {
                    assert!(a["span_id"].is_string() && a["text"].is_string());
                    assert_eq!(a.as_object().unwrap().len(), 4);
                }
                other => panic!("unexpected action type {other}"),
            }
        }
    }
}

#[test]
fn heuristic_labels_feed_queue_build() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = tmp.path().join("labels.json");
    let res = run(bin().arg("classify").arg(handbuilt()).args(["--kind", "heuristic", "--out"]).arg(&labels));
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("micro-F1"));
    let file = read_json(&labels);
    let spans = read_json(&handbuilt());
    let counts: BTreeMap<&str, usize> = spans["pages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["page_id"].as_str().unwrap(), p["spans"].as_array().unwrap().len()))
        .collect();
    let written: Vec<&str> = file["pages"].as_array().unwrap().iter().map(|l| l["page_id"].as_str().unwrap()).collect();
    assert_eq!(written, counts.keys().copied().collect::<Vec<_>>());
    for l in file["pages"].as_array().unwrap() {
        assert_eq!(counts[l["page_id"].as_str().unwrap()], l["labels"].as_object().unwrap().len());
    }
    let res = run(bin().args(["queue", "build"]).arg(handbuilt()).arg("--labels").arg(&labels).arg("--dump"));
    assert!(res.status.success());
    assert_eq!(String::from_utf8(res.stdout).unwrap().lines().count(), 6);
}

fn bench_saving(spans: &Path, dir: &Path) -> Value {
    let report = dir.join("bench.json");
    let res = run(bin().arg("bench").arg(spans).arg("--out").arg(&report));
    assert!(res.status.success());
    read_json(&report)
}

#[test]
fn bench_saving_tracks_copy_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let spans = synth(tmp.path(), "c35.json", 20, 0.35, 7);
    let r = bench_saving(&spans, tmp.path());
    let saving = r["efficiency"]["saving_steps_pct"].as_f64().unwrap();
    assert!((saving - 35.0).abs() <= 5.0, "{saving}");
    assert_eq!(r["quality"]["edit_queue"]["bleu"], 1.0);

    let spans = synth(tmp.path(), "c0.json", 10, 0.0, 7);
    let saving = bench_saving(&spans, tmp.path())["efficiency"]["saving_steps_pct"].as_f64().unwrap();
    assert!(saving.abs() <= 1e-9, "{saving}");
}

#[test]
fn fully_copyable_page_costs_only_the_stop_sign() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "every word on this page is already stored in the pdf text layer";
    let spans = tmp.path().join("one.json");
    let body = serde_json::json!({"pages": [{
        "page_id": "one", "width": 600, "height": 800, "reference_markdown": text,
        "spans": [{"span_id": "s1", "text": text, "bbox": [50, 100, 550, 140], "order": 0, "label": "KEEP"}]
    }]});
    fs::write(&spans, body.to_string()).unwrap();
    let e = &bench_saving(&spans, tmp.path())["efficiency"];
    // Queue [T, Copy, T]: the first trigger emits the 3 stop-sign words, the last hits EOS at once.
    assert_eq!(e["generation_steps_et"], 3.0);
    assert_eq!(e["generation_steps_baseline"], text.split(' ').count() as f64);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "n = 5\nn_prime = 5\n").unwrap();
    let bad = run(bin().arg("--config").arg(&cfg).arg("validate").arg(handbuilt()));
    assert_eq!(bad.status.code(), Some(1));
    let good = run(bin().arg("--config").arg(&cfg).args(["--n", "3"]).arg("validate").arg(handbuilt()));
    assert!(good.status.success());
}

#[test]
fn malformed_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spans = tmp.path().join("bad.json");
    fs::write(&spans, "{\"pages\": [ {\"page_id\": 3 } ]}").unwrap();
    let res = run(bin().arg("validate").arg(&spans));
    assert_eq!(res.status.code(), Some(1));
    let usage = run(bin().arg("transform"));
    assert_eq!(usage.status.code(), Some(1));
}
