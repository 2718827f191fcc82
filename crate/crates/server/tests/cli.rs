use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use arginote_core::engine::encode_events;
use arginote_core::fixtures::{four_team_log, team_one_log};
use serde_json::Value;

const THREE_EVENT_DIGEST: &str = "7945b1863d678a97f9750cf795a8a5ee237a38bc8478eb168118201bbf025866";

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_arginote"));
    cmd.env_remove("ARGINOTE_PORT").env_remove("ARGINOTE_DATA_DIR");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn committed_fixtures_match_the_generators() {
    assert_eq!(std::fs::read(fixture("four_teams.jsonl")).unwrap(), encode_events(&four_team_log()));
    assert_eq!(std::fs::read(fixture("team_one.jsonl")).unwrap(), encode_events(&team_one_log()));
}

#[test]
fn replay_prints_the_pinned_digest() {
    let out = run(&["replay", fixture("three_events.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), format!("{THREE_EVENT_DIGEST}\n"));
}

#[test]
fn replay_prints_one_line_per_log() {
    let three = fixture("three_events.jsonl");
    let four = fixture("four_teams.jsonl");
    let out = run(&["replay", three.to_str().unwrap(), four.to_str().unwrap(), three.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], THREE_EVENT_DIGEST);
    assert_eq!(lines[2], THREE_EVENT_DIGEST);
    assert_ne!(lines[1], THREE_EVENT_DIGEST);
    assert_eq!(lines[1].len(), 64);
}

#[test]
fn replay_refuses_corrupt_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = std::fs::read(fixture("three_events.jsonl")).unwrap();
    let at = bytes.iter().position(|b| *b == b':').unwrap();
    bytes.insert(at + 1, b' ');
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, bytes).unwrap();
    let out = run(&["replay", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).is_empty());
    assert!(!out.stderr.is_empty());

    let out = run(&["replay", dir.path().join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_reports_team_summaries() {
    let out = run(&["analyze", fixture("four_teams.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let pairs: Vec<(u64, f64)> = v["teams"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["citation_count"].as_u64().unwrap(), t["best_score"].as_f64().unwrap()))
        .collect();
    assert_eq!(pairs, [(4, 0.991), (1, 0.72), (9, 0.88), (1, 0.785)]);
    assert!(v["spearman"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_csv_for_one_team() {
    let log = fixture("team_one.jsonl");
    let out = run(&["analyze", log.to_str().unwrap(), "--csv", "--team", "s1-t2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,score,is_cited,is_citing,is_final"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows.iter().filter(|r| r[4] == "true").count(), 1);
    assert_eq!(rows[0][1], "0.31");

    let out = run(&["analyze", log.to_str().unwrap(), "--csv", "--team", "s1-t99"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    let log = fixture("team_one.jsonl");
    let log = log.to_str().unwrap();
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["replay"],
        vec!["analyze"],
        vec!["analyze", log, "--csv"],
        vec!["analyze", log, "--team", "s1-t2"],
        vec!["simulate", "--seed", "x", "--out", "o"],
        vec!["simulate", "--out", "o"],
        vec!["serve"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    for (path, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let out = run(&["simulate", "--seed", seed, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn simulate_reads_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"{"teams":[{"name":"Solo","members":["ada"]}],"submissions":5,"final_analysis":false}"#,
    )
    .unwrap();
    let out_path = dir.path().join("log.jsonl");
    let out = run(&["simulate", "--script", script.to_str().unwrap(), "--seed", "1", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    // session + team + member + at most five papers
    let n = text.lines().count();
    assert!((3..=8).contains(&n), "{n}");

    std::fs::write(&script, "{not json").unwrap();
    let out = run(&["simulate", "--script", script.to_str().unwrap(), "--seed", "1", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts `serve` and returns it with the address it reports.
fn spawn_serve(cmd: &mut Command) -> (Server, String) {
    let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line:?}")).to_owned();
    (Server(child), addr)
}

fn challenge_file(dir: &Path) -> PathBuf {
    let path = dir.join("challenge.json");
    std::fs::write(
        &path,
        r#"[{"id":"reference-2d","kind":"gaussian-proximity","params":{"dimension":2,"target":[0,0]}}]"#,
    )
    .unwrap();
    path
}

#[tokio::test]
async fn serve_persists_sessions_and_flags_beat_env() {
    let dir = tempfile::tempdir().unwrap();
    let challenge = challenge_file(dir.path());
    let env_dir = dir.path().join("from-env");
    let (server, addr) = spawn_serve(
        bin()
            .args(["serve", "--port", "0", "--challenge", challenge.to_str().unwrap()])
            .env("ARGINOTE_PORT", "1")
            .env("ARGINOTE_DATA_DIR", &env_dir),
    );
    let http = reqwest::Client::new();
    let resp = http
        .post(format!("http://{addr}/v1/sessions"))
        .body(r#"{"challenge_id":"reference-2d"}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 201);
    assert!(env_dir.join("s1.jsonl").exists());
    drop(server);

    // restart on the same data: the session is still there
    let flag_dir = dir.path().join("from-flag");
    std::fs::create_dir(&flag_dir).unwrap();
    std::fs::copy(env_dir.join("s1.jsonl"), flag_dir.join("s1.jsonl")).unwrap();
    let (_server, addr) = spawn_serve(bin().args([
        "serve",
        "--port",
        "0",
        "--data-dir",
        flag_dir.to_str().unwrap(),
        "--challenge",
        challenge.to_str().unwrap(),
    ]).env("ARGINOTE_DATA_DIR", &env_dir));
    let export = http.get(format!("http://{addr}/v1/sessions/s1/export")).send().await.unwrap();
    assert_eq!(export.status().as_u16(), 200);
    assert_eq!(export.bytes().await.unwrap().to_vec(), std::fs::read(env_dir.join("s1.jsonl")).unwrap());
}

#[test]
fn serve_rejects_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id":"c","kind":"no-such-kind","params":{}}"#).unwrap();
    let out = bin()
        .args(["serve", "--port", "0", "--data-dir", dir.path().to_str().unwrap(), "--challenge", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(dir.path().join("s1.jsonl"), "garbage\n").unwrap();
    let good = challenge_file(dir.path());
    let out = bin()
        .args(["serve", "--port", "0", "--data-dir", dir.path().to_str().unwrap(), "--challenge", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
