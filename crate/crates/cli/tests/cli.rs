//! Command-level tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_queryforge"))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn pipeline_config() -> PathBuf {
    fixtures().join("pipeline.toml")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

fn write_lines(path: &Path, lines: &[&str]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn ingest_prints_store_shape() {
    let output = bin()
        .args(["ingest", "--config"])
        .arg(pipeline_config())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("nodes=112"), "stdout: {text}");
    assert!(text.contains("edges=703"));
    assert!(text.contains("assets=800"));
}

#[test]
fn ingest_small_demo_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_lines(
        &dir.path().join("kg.jsonl"),
        &[
            r#"{"record_type":"node","id":"i1","kind":"Intent","label":"Birthday"}"#,
            r#"{"record_type":"node","id":"i2","kind":"Intent","label":"Diwali"}"#,
            r#"{"record_type":"node","id":"i3","kind":"Intent","label":"Baby shower"}"#,
            r#"{"record_type":"node","id":"d1","kind":"DesignType","label":"Card"}"#,
            r#"{"record_type":"node","id":"d2","kind":"DesignType","label":"Invite"}"#,
            r#"{"record_type":"node","id":"s1","kind":"SceneObject","label":"Cake"}"#,
            r#"{"record_type":"node","id":"a1","kind":"Action","label":"Cut a cake"}"#,
            r#"{"record_type":"edge","src":"i1","dst":"d1","relation":"uses"}"#,
            r#"{"record_type":"edge","src":"i1","dst":"d2","relation":"uses"}"#,
            r#"{"record_type":"edge","src":"i2","dst":"d1","relation":"uses"}"#,
            r#"{"record_type":"edge","src":"i3","dst":"d2","relation":"uses"}"#,
            r#"{"record_type":"edge","src":"i1","dst":"s1","relation":"shows"}"#,
            r#"{"record_type":"edge","src":"s1","dst":"a1","relation":"affords"}"#,
        ],
    );
    write_lines(
        &dir.path().join("assets.jsonl"),
        &[
            r#"{"asset_id":"img-001","kind":"Image","title":"Tropical frangipani flowers floating","keywords":["flower"],"gentech":false}"#,
            r#"{"asset_id":"tpl-001","kind":"Template","title":"Galaxy Minecraft Server Banner","topics":["space"]}"#,
        ],
    );
    std::fs::write(
        dir.path().join("pipeline.toml"),
        "[paths]\nkg = \"kg.jsonl\"\nassets = \"assets.jsonl\"\n",
    )
    .unwrap();

    let output = bin()
        .args(["ingest", "--config"])
        .arg(dir.path().join("pipeline.toml"))
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("nodes=7 edges=6 assets=2"), "stdout: {text}");
}

#[test]
fn ingest_missing_kg_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pipeline.toml"),
        "[paths]\nkg = \"missing-kg.jsonl\"\nassets = \"assets.jsonl\"\n",
    )
    .unwrap();
    let output = bin()
        .args(["ingest", "--config"])
        .arg(dir.path().join("pipeline.toml"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("missing-kg.jsonl"));
}

#[test]
fn ingest_duplicate_asset_id_exits_two_naming_id() {
    let dir = tempfile::tempdir().unwrap();
    write_lines(
        &dir.path().join("kg.jsonl"),
        &[r#"{"record_type":"node","id":"i1","kind":"Intent","label":"Birthday"}"#],
    );
    write_lines(
        &dir.path().join("assets.jsonl"),
        &[
            r#"{"asset_id":"dup-1","kind":"Template","title":"A","topics":[]}"#,
            r#"{"asset_id":"dup-1","kind":"Template","title":"B","topics":[]}"#,
        ],
    );
    std::fs::write(
        dir.path().join("pipeline.toml"),
        "[paths]\nkg = \"kg.jsonl\"\nassets = \"assets.jsonl\"\n",
    )
    .unwrap();
    let output = bin()
        .args(["ingest", "--config"])
        .arg(dir.path().join("pipeline.toml"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("dup-1"));
}

#[test]
fn generate_single_record_manifest() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["generate", "--config"])
        .arg(pipeline_config())
        .args(["-n", "1", "--seed", "5", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["counts"]["total"], 1);
    let search = manifest["counts"]["search"].as_u64().unwrap();
    let generate = manifest["counts"]["generate"].as_u64().unwrap();
    assert_eq!(search + generate, 1);
    let lines = std::fs::read_to_string(out.path().join("dataset.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1);
}

#[test]
fn generate_manifest_counts_match_file_lines() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["generate", "--config"])
        .arg(pipeline_config())
        .args(["-n", "250", "--seed", "11", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap())
            .unwrap();
    let lines = std::fs::read_to_string(out.path().join("dataset.jsonl")).unwrap();
    assert_eq!(
        manifest["counts"]["total"].as_u64().unwrap() as usize,
        lines.lines().count()
    );
    let route_sum: u64 = manifest["route_tallies"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(route_sum, 250);
}

#[test]
fn generate_skips_when_route_cannot_produce() {
    // A catalog with no gentech images and no graph pairs starves the
    // heuristic generate route; the other route keeps producing and every
    // failed draw lands in the skip log.
    let dir = tempfile::tempdir().unwrap();
    write_lines(
        &dir.path().join("kg.jsonl"),
        &[
            r#"{"record_type":"node","id":"i1","kind":"Intent","label":"Birthday"}"#,
            r#"{"record_type":"node","id":"d1","kind":"DesignType","label":"Card"}"#,
            r#"{"record_type":"edge","src":"i1","dst":"d1","relation":"uses"}"#,
        ],
    );
    write_lines(
        &dir.path().join("assets.jsonl"),
        &[
            r#"{"asset_id":"img-001","kind":"Image","title":"Plain shot","keywords":[],"gentech":false}"#,
        ],
    );
    std::fs::write(
        dir.path().join("router.toml"),
        r#"
batch_size = 500

[target.function_mix]
Search = 0.5
Generate = 0.5

[target.content_mix]
Photo = 1.0

[target.generator_mix]
Heuristic = 1.0

[[routes]]
route_id = "ok-search"
generator = "Heuristic"
function = "Search"
content_type = "Photo"
length = "Short"

[[routes]]
route_id = "starved-generate"
generator = "Heuristic"
function = "Generate"
content_type = "Photo"
length = "Long"
"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("pipeline.toml"),
        "seed = 3\nn_records = 8\n[paths]\nkg = \"kg.jsonl\"\nassets = \"assets.jsonl\"\nrouter = \"router.toml\"\n",
    )
    .unwrap();

    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["generate", "--config"])
        .arg(dir.path().join("pipeline.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));

    let dataset = std::fs::read_to_string(out.path().join("dataset.jsonl")).unwrap();
    assert_eq!(dataset.lines().count(), 8);
    for line in dataset.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(record["provenance"]["route_id"], "ok-search");
    }
    let skips = std::fs::read_to_string(out.path().join("skips.jsonl")).unwrap();
    assert!(!skips.is_empty(), "expected skip log entries");
    for line in skips.lines() {
        let skip: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(skip["route_id"], "starved-generate");
        assert!(
            skip["reason"].as_str().unwrap().contains("gentech"),
            "reason: {}",
            skip["reason"]
        );
    }
}

#[test]
fn generate_multi_lane_produces_requested_count() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["generate", "--config"])
        .arg(pipeline_config())
        .args(["-n", "400", "--seed", "9", "--lanes", "4", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let lines = std::fs::read_to_string(out.path().join("dataset.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 400);
}

#[test]
fn validate_mixed_fixture_splits_three_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("records.jsonl");
    let mk = |input: &str, function: &str| {
        format!(
            r#"{{"input":"{input}","function":"{function}","content_type":"Any","extracted_prompt":"x","provenance":{{"route_id":"r","generator":"TextLLM","seed":0}}}}"#
        )
    };
    let eleven = ["word"; 11].join(" ");
    let lines = [mk("find cats", "Search"),
        mk("find a {slot} here", "Search"),
        mk(&eleven, "Search"),
        mk("make a poster", "Generate"),
        mk("FIND CATS", "Search"),
        mk("show me dogs", "Search")];
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    write_lines(&input, &refs);

    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("validate")
        .arg(&input)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert!(stdout_of(&output).contains("accepted 3 rejected 3"));

    let rejections = std::fs::read_to_string(out.path().join("rejections.jsonl")).unwrap();
    assert_eq!(rejections.lines().count(), 3);
}

#[test]
fn validate_all_duplicates_keeps_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("records.jsonl");
    let line = r#"{"input":"find cats","function":"Search","content_type":"Any","extracted_prompt":"cats","provenance":{"route_id":"r","generator":"TextLLM","seed":0}}"#;
    write_lines(&input, &[line; 10]);
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("validate")
        .arg(&input)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("accepted 1 rejected 9"));
}

#[test]
fn report_identical_to_reference_has_zero_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    // One record per reference count unit, shrunk by 1/460 scale: use the
    // golden mix itself.
    let mut lines = Vec::new();
    let mix = [
        ("Template", 103),
        ("Photo", 97),
        ("Audio", 20),
        ("Video", 19),
        ("Background", 20),
        ("DesignAsset", 17),
        ("Text", 20),
        ("Any", 164),
    ];
    for (ct, count) in mix {
        for i in 0..count {
            lines.push(format!(
                r#"{{"input":"query {i} {ct}","function":"Search","content_type":"{ct}","extracted_prompt":"x","provenance":{{"route_id":"r","generator":"TextLLM","seed":0}}}}"#
            ));
        }
    }
    let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
    write_lines(&corpus, &refs);

    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("report")
        .arg(&corpus)
        .arg("--reference")
        .arg(fixtures().join("reference.json"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    let js = report["divergence_vs_reference"].as_f64().unwrap();
    assert!(js.abs() < 1e-12, "divergence {js}");
    for name in [
        "word_counts.csv",
        "content_types.csv",
        "keyword_positions.csv",
        "lengths_search.csv",
        "lengths_generate.csv",
    ] {
        assert!(out.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn report_on_generated_corpus_stays_near_target() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["generate", "--config"])
        .arg(pipeline_config())
        .args(["-n", "5000", "--seed", "21", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());

    let report_dir = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("report")
        .arg(out.path().join("dataset.jsonl"))
        .arg("--reference")
        .arg(fixtures().join("reference.json"))
        .arg("--out")
        .arg(report_dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(report_dir.path().join("report.json")).unwrap(),
    )
    .unwrap();
    let js = report["divergence_vs_reference"].as_f64().unwrap();
    assert!(js < 0.01, "divergence {js}");
}

#[test]
fn report_empty_corpus_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.jsonl");
    std::fs::write(&corpus, "").unwrap();
    let output = bin()
        .arg("report")
        .arg(&corpus)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_length_mismatch_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.jsonl");
    write_lines(
        &preds,
        &[r#"{"query":"q","raw_model_output":"Search(content_type=\"Photo\", extracted_prompt=\"x\")"}"#],
    );
    let output = bin()
        .arg("eval")
        .arg(&preds)
        .arg(fixtures().join("golden.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("460"));
}

#[test]
fn eval_unknown_provider_is_usage_error() {
    let output = bin()
        .arg("eval")
        .arg("a.jsonl")
        .arg("b.jsonl")
        .args(["--provider", "embedding-3000"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let output = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    let output = bin().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout_of(&output).contains("generate"));

    let output = bin().arg("generate").output().unwrap();
    assert_eq!(output.status.code(), Some(1), "missing --config is a usage error");
}
