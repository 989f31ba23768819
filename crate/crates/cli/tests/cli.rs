//! Drives the `semem` binary: replay goldens, exit codes, the REPL over
//! piped stdin, the seed file and the server.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_semem");
const SCENARIOS: [&str; 6] = ["exp1", "exp2", "exp3", "exp3_link", "closest_accept", "closest_reject"];

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn every_scenario_matches_its_golden() {
    for name in SCENARIOS {
        let file = scenarios().join(format!("{name}.scenario.json"));
        let golden = scenarios().join(format!("{name}.transcript.txt"));
        let out = run(&["replay", file.to_str().unwrap(), "--golden", golden.to_str().unwrap()]);
        assert!(
            out.status.success(),
            "{name}: {}{}",
            stdout(&out),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn replay_is_deterministic() {
    let file = scenarios().join("exp3.scenario.json");
    let a = run(&["--replay", file.to_str().unwrap()]);
    let b = run(&["--replay", file.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn failed_expectation_exits_one() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bad_expectation.scenario.json");
    let out = run(&["replay", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("[expect] present screw_1: FAILED"), "{}", stdout(&out));
}

#[test]
fn golden_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let golden = dir.path().join("wrong.txt");
    std::fs::write(&golden, "# something else\n").unwrap();
    let file = scenarios().join("exp1.scenario.json");
    let out = run(&["replay", file.to_str().unwrap(), "--golden", golden.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("differs"));
}

#[test]
fn missing_files_exit_two() {
    let out = run(&["replay", "/nonexistent/x.scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_with_stdin(&["--prior", "/nonexistent/prior.semem.json"], "");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior"));
}

#[test]
fn repl_runs_instructions_and_survives_bad_commands() {
    let scene = scenarios().join("exp1.scene.json");
    let out = run_with_stdin(
        &["--scene", scene.to_str().unwrap()],
        "YuMi, pick the screw!\n:frob\nYuMi, pick!\n:graph\n:log\n:quit\nYuMi, pick the nut!\n",
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("[perception] instantiated 4"), "{text}");
    assert!(text.contains("[match] resolved: yumi_1 pick screw_1 via pick_screw_skill"), "{text}");
    assert!(text.contains("error: unknown command `:frob` (try :help)"), "{text}");
    assert!(text.contains("error: NoPatientFound"), "{text}");
    assert!(text.contains("nut_1 (Nut)"), "{text}");
    assert!(!text.lines().any(|l| l.starts_with("screw_1 (Screw)")), "{text}");
    assert!(!text.contains("pick nut_1"), "input after :quit was read: {text}");
}

#[test]
fn repl_dialogue_and_triplet_strategy() {
    let scene = scenarios().join("exp3.scene.json");
    let out = run_with_stdin(
        &["--scene", scene.to_str().unwrap(), "--strategy", "triplet"],
        ":prompt\n:new new_obj\nYuMi pick the new_obj.\n:link Box\n",
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("label_unknown_object"), "{text}");
    assert!(text.contains("type_created new_obj"), "{text}");
    assert!(text.contains("needs_action_confirmation"), "{text}");
    assert!(text.contains("action_defined YuMi pick new_obj via pick_box_skill"), "{text}");
    assert!(text.contains("removed [new_obj_1]"), "{text}");
}

#[test]
fn save_on_exit_writes_a_loadable_prior() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("learned.semem.json");
    let scene = scenarios().join("exp3.scene.json");
    let out = run_with_stdin(
        &["--scene", scene.to_str().unwrap(), "--save-on-exit", saved.to_str().unwrap()],
        ":new new_obj\n",
    );
    assert!(out.status.success());
    let world = semem_core::persistence::load_from_path(&saved).unwrap();
    assert!(world.graph.find_type("new_obj").is_some());
    assert!(world.graph.instances().is_empty());

    let out = run_with_stdin(&["--prior", saved.to_str().unwrap()], ":graph\n");
    assert!(stdout(&out).contains("new_obj"), "{}", stdout(&out));
}

#[test]
fn seed_command_reproduces_the_bundled_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("seed.semem.json");
    assert!(run(&["seed", "--out", out_path.to_str().unwrap()]).status.success());
    let fresh = std::fs::read_to_string(&out_path).unwrap();
    let bundled = std::fs::read_to_string(scenarios().join("seed.semem.json")).unwrap();
    assert_eq!(fresh, bundled);
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(BIN)
        .args(["serve", "--addr", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let body: serde_json::Value = rt.block_on(async {
        reqwest::get(format!("{url}/graph")).await.unwrap().json().await.unwrap()
    });
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(body["ok"], true);
    assert!(body["data"]["graph"]["nodes"].as_array().unwrap().len() > 10);
}
