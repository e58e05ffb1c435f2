use std::path::{Path, PathBuf};
use std::process::Command;

use mentorloop_core::governance::{AuditLog, DigestAlgorithm};
use mentorloop_core::{ActorId, Timestamp};
use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mentorloop"))
}

fn core_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn write_log(path: &Path, n: usize) {
    let mut log = AuditLog::open_file(path, DigestAlgorithm::Sha256).unwrap();
    for i in 0..n {
        log.append(
            &ActorId::new("alice"),
            "context.put",
            "context:alice",
            json!({"item_id": format!("item-{i}")}),
            Timestamp(i as i64),
        )
        .unwrap();
    }
}

#[test]
fn audit_verify_pristine_then_tampered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    write_log(&path, 8);

    let out = bin().args(["audit", "verify"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "Valid");

    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("item-5", "item-9", 1);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    let out = bin().args(["audit", "verify"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "BrokenAt(5)");
}

#[test]
fn audit_verify_on_missing_file_is_a_diagnostic() {
    let out = bin().args(["audit", "verify", "/nonexistent/audit.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn triage_report_csv_has_fifteen_rows() {
    let catalog = core_path("data/catalog.csv");
    let out = bin().args(["triage", "report", "--format", "csv"]).arg(&catalog).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.records().count(), 15);

    let out = bin().args(["triage", "validate"]).arg(&catalog).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn triage_validate_flags_a_bad_severity() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    let text = std::fs::read_to_string(core_path("data/catalog.csv")).unwrap();
    // mental-health strain has P=2, C=3, S=3; claim S=2 instead
    let broken = text.replacen(",2,3,3,1,H,", ",2,3,2,1,H,", 1);
    assert_ne!(text, broken);
    std::fs::write(&bad, broken).unwrap();
    let out = bin().args(["triage", "validate"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violation"));
}

#[test]
fn replay_golden_transcript_and_detect_edits() {
    let golden = core_path("tests/golden/patch_persistence.json");
    let out = bin().arg("replay").arg(&golden).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 mismatch"));

    let dir = tempfile::tempdir().unwrap();
    let edited = dir.path().join("edited.json");
    let text = std::fs::read_to_string(&golden).unwrap();
    std::fs::write(&edited, text.replacen("random slopes", "fixed slopes", 1)).unwrap();
    let out = bin().arg("replay").arg(&edited).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

#[test]
fn ingest_corpus_reads_a_manifest_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("manifest.toml"),
        "[[document]]\nid = \"leave\"\ntitle = \"Leave\"\nversion = 2\neffective_date = \"2025-01-01\"\nclass = \"policy\"\nfile = \"leave.md\"\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("leave.md"), "annual-leave: 20 days\nCandidates may take annual leave.\n").unwrap();
    let out = bin().args(["ingest-corpus", "--class", "policy"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["documents"][0]["id"], "leave");
    assert_eq!(v["documents"][0]["version"], 2);

    let out = bin().args(["ingest-corpus", "--class", "student:alice"]).arg(dir.path()).output().unwrap();
    assert_ne!(out.status.code(), Some(0), "policy manifest accepted as a student corpus");
}
