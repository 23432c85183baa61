use std::path::Path;
use std::process::{Command, Output};

fn expmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expmem")).args(args).output().expect("spawn expmem")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn run_to(dir: &Path, scenario: &str, backend: &str) -> Output {
    expmem(&["run", "--scenario", scenario, "--backend", backend, "--out", dir.to_str().unwrap()])
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_to(dir.path(), "stm-apple-container", "scripted-reflective")), 0);
    assert_eq!(code(&run_to(dir.path(), "stm-apple-container", "scripted-naive")), 1);
    assert_eq!(code(&run_to(dir.path(), "no-such-scenario", "scripted-reflective")), 2);
    assert_eq!(code(&expmem(&["run", "--scenario", "stm-egg", "--write-back"])), 2);
    assert_eq!(code(&expmem(&["run", "--scenario", "stm-egg", "--memory", "stm+ltm"])), 2);
}

#[test]
fn replay_detects_edits_and_wrong_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_to(dir.path(), "stm-apple-container", "scripted-reflective")), 0);
    let log = dir.path().join("episode.ndjson");
    let replayed = expmem(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&replayed), 0, "{}", String::from_utf8_lossy(&replayed.stderr));

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let first = lines.iter_mut().find(|l| l["type"] == "step").unwrap();
    first["action"]["target_object"] = "plate".into();
    let edited = dir.path().join("edited.ndjson");
    let body: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    std::fs::write(&edited, body.join("\n") + "\n").unwrap();
    assert_eq!(code(&expmem(&["replay", edited.to_str().unwrap()])), 4);

    let other = expmem(&["replay", log.to_str().unwrap(), "--scenario", "stm-egg"]);
    assert_eq!(code(&other), 2);
    assert_eq!(code(&expmem(&["replay", dir.path().join("missing.ndjson").to_str().unwrap()])), 2);
}

#[test]
fn memory_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.ndjson");
    let s = store.to_str().unwrap();
    assert_eq!(code(&expmem(&["memory", "--store", s, "show", "0"])), 2);
    assert_eq!(code(&expmem(&["memory", "--store", s, "seed-fillers", "96"])), 0);
    let ls = expmem(&["memory", "--store", s, "ls"]);
    assert_eq!(code(&ls), 0);
    assert_eq!(String::from_utf8(ls.stdout).unwrap().lines().count(), 96);
    assert_eq!(code(&expmem(&["memory", "--store", s, "show", "95"])), 0);
    assert_eq!(code(&expmem(&["memory", "--store", s, "show", "96"])), 2);

    let copy = dir.path().join("copy.ndjson");
    assert_eq!(code(&expmem(&["memory", "--store", s, "export", copy.to_str().unwrap()])), 0);
    let back = expmem::memory::MemoryStore::load(&copy).unwrap();
    assert_eq!(back.records(), expmem::memory::MemoryStore::load(&store).unwrap().records());
}

#[test]
fn write_back_grows_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.ndjson");
    let s = store.to_str().unwrap();
    assert_eq!(code(&expmem(&["memory", "--store", s, "seed-fillers", "4"])), 0);
    let out = expmem(&["run", "--scenario", "stm-egg", "--memory", "stm+ltm", "--store", s, "--write-back"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(expmem::memory::MemoryStore::load(&store).unwrap().len(), 5);
}

#[test]
fn identical_invocations_give_identical_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_to(a.path(), "stm-candy-sponge", "scripted-reflective");
    let second = run_to(b.path(), "stm-candy-sponge", "scripted-reflective");
    assert_eq!(first.stdout, second.stdout);
    for f in ["episode.ndjson", "transcript.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let suite = |d: &Path| expmem(&["suite", "--suite", "stm", "--out", d.to_str().unwrap()]);
    assert_eq!(suite(a.path()).stdout, suite(b.path()).stdout);
    assert_eq!(std::fs::read(a.path().join("stm.json")).unwrap(), std::fs::read(b.path().join("stm.json")).unwrap());
}
