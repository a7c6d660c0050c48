use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_davnav");

const CONFIG: &str = r#"version = 1
name = "cli"
seed = 8
episodes = 8
move_probs = [0.2]
[maps]
count = 2
[sounds]
count = 12
"#;

fn davnav(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(BIN).args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.success(),
        "davnav {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn suite_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), CONFIG).unwrap();
    davnav(
        dir.path(),
        &["gen-suite", "--config", "small.toml", "--out", "suite.json"],
    );
    dir
}

fn logs(run: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(run.join("logs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().into(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), CONFIG).unwrap();
    assert!(stdout(&davnav(d, &["gen-maps", "--config", "small.toml", "--out", "maps"])).contains("wrote 2 maps"));
    davnav(d, &["gen-sounds", "--config", "small.toml", "--out", "sounds"]);
    assert!(d.join("sounds/splits.txt").exists());
    std::fs::write(
        d.join("stored.toml"),
        CONFIG
            .replace("[maps]\n", "[maps]\ndir = \"maps\"\n")
            .replace("[sounds]\n", "[sounds]\ndir = \"sounds\"\n"),
    )
    .unwrap();
    davnav(
        d,
        &[
            "gen-suite",
            "--config",
            "stored.toml",
            "--mode",
            "waypoint",
            "--out",
            "suite.json",
        ],
    );

    let table = stdout(&davnav(
        d,
        &["run-suite", "suite.json", "--agent", "greedy", "--out", "run"],
    ));
    assert!(table.contains("SR") && table.contains("all"), "{table}");
    assert_eq!(logs(&d.join("run")).len(), 8);

    davnav(d, &["score", "suite.json", "run"]);
    let scored: String = table
        .lines()
        .take_while(|l| !l.starts_with("logs in"))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(std::fs::read_to_string(d.join("run/results.txt")).unwrap(), scored);
    assert!(d.join("run/results.json").exists());

    let replay = stdout(&davnav(d, &["replay", "suite.json", "run/logs/ep0000.jsonl"]));
    assert!(replay.starts_with("identical "), "{replay}");

    davnav(d, &["plot", "suite.json", "run/logs/ep0001.jsonl", "--out", "ep1.svg"]);
    let svg = std::fs::read_to_string(d.join("ep1.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = suite_dir();
    let d = dir.path();
    for run in ["a", "b"] {
        davnav(d, &["run-suite", "suite.json", "--agent", "random:3", "--out", run]);
        davnav(d, &["score", "suite.json", run]);
    }
    assert_eq!(logs(&d.join("a")), logs(&d.join("b")));
    for f in ["results.txt", "results.json"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn oracle_scores_full_dspl() {
    let dir = suite_dir();
    let d = dir.path();
    davnav(d, &["run-suite", "suite.json", "--agent", "oracle", "--out", "run"]);
    let table = stdout(&davnav(d, &["score", "suite.json", "run"]));
    let all = table.lines().find(|l| l.starts_with("all")).unwrap();
    let cols: Vec<&str> = all.split_whitespace().collect();
    // all, n, SR, SPL, SNA, DSPL, DSNA
    assert_eq!(cols[2], "1.000", "{table}");
    assert_eq!(cols[5], "1.000", "{table}");
}

#[test]
fn exec_agent_matches_in_process() {
    let dir = suite_dir();
    let d = dir.path();
    davnav(d, &["run-suite", "suite.json", "--agent", "greedy", "--out", "local"]);
    let exec = format!("exec:{BIN} agent --policy greedy --suite suite.json");
    davnav(d, &["run-suite", "suite.json", "--agent", &exec, "--out", "remote"]);
    assert_eq!(logs(&d.join("local")), logs(&d.join("remote")));
}

#[test]
fn tampered_log_fails_replay() {
    let dir = suite_dir();
    let d = dir.path();
    davnav(d, &["run-suite", "suite.json", "--agent", "random:1", "--out", "run"]);
    let path = d.join("run/logs/ep0002.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("\"collided\":false", "\"collided\":true", 1);
    assert_ne!(tampered, text);
    std::fs::write(&path, tampered).unwrap();
    let out = Command::new(BIN)
        .args(["replay", "suite.json", "run/logs/ep0002.jsonl"])
        .current_dir(d)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bad_agent_spec_is_an_error() {
    let dir = suite_dir();
    let out = Command::new(BIN)
        .args(["run-suite", "suite.json", "--agent", "telepathy", "--out", "run"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("telepathy"));
}
