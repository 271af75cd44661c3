use std::fs;
use std::path::Path;
use std::process::Command;

use baymeta_cli::run::RunSummary;
use baymeta_cli::{EXIT_CHECKS, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK};

fn baymeta() -> Command {
    Command::new(env!("CARGO_BIN_EXE_baymeta"))
}

fn write_config(dir: &Path, name: &str, body: &str, out: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let text = format!("output_dir = {:?}\n{body}", dir.join(out));
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "hp.epochs = 1\nhp.episodes_per_epoch = 6\nhp.val_episodes = 2\neval.test_episodes = 10\n";

fn listed_files_only(dir: &Path) {
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    for entry in fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        assert!(
            name == "summary.json" || summary.artifacts.contains(&name),
            "{name} is not listed in the summary"
        );
    }
    for name in &summary.artifacts {
        assert!(dir.join(name).exists(), "{name} listed but missing");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for out in ["a", "b"] {
        let cfg = write_config(tmp.path(), &format!("{out}.toml"), SMALL, out);
        let status = baymeta().arg("run").arg(&cfg).output().unwrap();
        assert_eq!(status.status.code(), Some(EXIT_OK as i32), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(tmp.path().join(out));
    }
    for file in ["metrics.csv", "loss.csv", "params.json", "histogram.csv"] {
        assert_eq!(
            fs::read(outputs[0].join(file)).unwrap(),
            fs::read(outputs[1].join(file)).unwrap(),
            "{file} differs"
        );
    }
    listed_files_only(&outputs[0]);
}

#[test]
fn federated_run_lists_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("mode = \"federated\"\n{SMALL}fed.clients = 3\nfed.rounds = 4\nfed.checkpoint_every = 2\nfed.checkpoint_samples = 4\nfed.probe_samples = 4\n");
    let cfg = write_config(tmp.path(), "fed.toml", &body, "fed");
    let out = baymeta().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK as i32), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("fed");
    assert!(dir.join("fed_trace.csv").exists());
    assert!(dir.join("fed_checkpoints.csv").exists());
    listed_files_only(&dir);

    let report = baymeta().arg("report").arg(&dir).output().unwrap();
    assert_eq!(report.status.code(), Some(EXIT_OK as i32));
    assert!(String::from_utf8_lossy(&report.stdout).contains("auroc"));
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "hp.alpah = 0.1\n", "bad");
    let out = baymeta().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn invalid_value_names_its_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "tasks.counts.k = 0\n", "bad");
    let out = baymeta().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tasks.counts.k"));
}

#[test]
fn divergence_exits_with_its_own_code() {
    let tmp = tempfile::tempdir().unwrap();
    // An unbounded net whose first update overflows the embeddings.
    let body = "net.activation = \"identity\"\nnet.layer_norm = false\nhp.beta = 1e305\nhp.optimizer = \"sgd\"\nhp.epochs = 3\nhp.episodes_per_epoch = 20\neval.test_episodes = 5\n";
    let cfg = write_config(tmp.path(), "div.toml", body, "div");
    let out = baymeta().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(EXIT_DIVERGENCE as i32),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!tmp.path().join("div").exists(), "a diverged run must not leave partial artifacts");
}

#[test]
fn checks_pass_and_write_their_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("checks");
    let out = baymeta().arg("checks").arg("--output-dir").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK as i32), "{}", String::from_utf8_lossy(&out.stdout));
    assert_ne!(EXIT_OK, EXIT_CHECKS);
    let table = fs::read_to_string(dir.join("checks.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    listed_files_only(&dir);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = baymeta().arg("run").arg("/nonexistent/config.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
}
