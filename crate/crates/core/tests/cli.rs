use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use metamimic::replay::{priority_quantiles, ImitationTransition, ReplayConfig, ReplayService};
use metamimic::transport::{serve, Hub, ParamStore, ReplayClient, TcpClient};
use metamimic::env::Observation;

fn metamimic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metamimic")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "mode = imitation\nseed = 5\nout_dir = {out}\ntrain_dataset = {d}/train.mmdm\nvalid_dataset = {d}/valid.mmdm\n\
         demo_count_train = 4\ndemo_count_valid = 2\nnetwork = small\nactors = 1\nbatch_size = 8\nmin_fill = 16\n\
         imitation_capacity = 2000\ntask_capacity = 2000\nlearner_steps = 10\neval_period = 5\neval_demos = 2\neval_episodes = 2\n\
         record_wall_clock = false\n{extra}",
        out = dir.join("run").display(),
        d = dir.display()
    );
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_demos_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = metamimic(&["gen-demos", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["train.mmdm", "valid.mmdm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // Manifests differ only in the recorded file paths.
    let without_paths = |dir: &Path| -> Vec<String> {
        std::fs::read_to_string(dir.join("manifest.txt")).unwrap().lines().filter(|l| !l.contains("_file =")).map(String::from).collect()
    };
    assert_eq!(without_paths(&a), without_paths(&b));
    assert!(without_paths(&a).iter().any(|l| l.starts_with("train_sha256")));

    let other = dir.path().join("c");
    metamimic(&["gen-demos", "--config", &cfg, "--seed", "6", "--out", other.to_str().unwrap()]);
    assert_ne!(std::fs::read(a.join("train.mmdm")).unwrap(), std::fs::read(other.join("train.mmdm")).unwrap());
}

#[test]
fn train_then_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&metamimic(&["gen-demos", "--config", &cfg])), 0);
    let o = metamimic(&["train", "--config", &cfg, "--in-process"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(csv.lines().count() >= 3, "{csv}");
    assert!(run.join("config.txt").exists());

    let ck = run.join("checkpoint");
    let reports: Vec<String> = ["r1.txt", "r2.txt"]
        .iter()
        .map(|name| {
            let path = dir.path().join(name);
            let o = metamimic(&["eval", "--config", &cfg, "--checkpoint", ck.to_str().unwrap(), "--out", path.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read_to_string(path).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].contains("mean_imitation_return"));

    // The same checkpoint under a different network variant is a config error.
    let large = write_config(dir.path(), "network = large\n");
    assert_eq!(code(&metamimic(&["eval", "--config", &large, "--checkpoint", ck.to_str().unwrap()])), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&metamimic(&["train", "--config", &cfg, "--mode", "sideways"])), 2);
    assert_eq!(code(&metamimic(&["train", "--config", &cfg, "--endpoint", "x:1", "--in-process"])), 2);
    // No dataset generated yet.
    assert_eq!(code(&metamimic(&["train", "--config", &cfg])), 2);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&metamimic(&["gen-demos", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&metamimic(&["inspect-replay", "--endpoint", "127.0.0.1:1"])), 3);
    assert_eq!(code(&metamimic(&["--help"])), 0);
}

fn item(k: u32) -> ImitationTransition {
    let o = Arc::new(Observation { grid: 2, image: vec![k as f64; 12], body: [0.0; 5] });
    ImitationTransition {
        obs: Arc::clone(&o),
        action: [0.0; 3],
        next_obs: Arc::clone(&o),
        reward_imitate: 1.0,
        reward_task: 0.0,
        discount: 0.99,
        next_goal: Arc::clone(&o),
        goal: o,
        demo_id: 0,
        step_index: k,
    }
}

fn stat(text: &str, key: &str) -> String {
    text.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = "))).unwrap().to_string()
}

#[test]
fn inspect_replay_reports_server_state() {
    let config = ReplayConfig { imitation_capacity: 100, task_capacity: 100, min_fill: 1, seed: 0 };
    let hub = Arc::new(Hub::new(Arc::new(ReplayService::new(&config).unwrap()), Arc::new(ParamStore::new())));
    let server = serve(Arc::clone(&hub), "127.0.0.1:0").unwrap();
    let endpoint = server.local_addr().to_string();

    let fresh = String::from_utf8(metamimic(&["inspect-replay", "--endpoint", &endpoint]).stdout).unwrap();
    assert_eq!(stat(&fresh, "imitation_len"), "0");
    assert_eq!(stat(&fresh, "task_len"), "0");

    let mut client = TcpClient::connect(&endpoint).unwrap();
    client.insert_imitation((0..7).map(item).collect()).unwrap();
    client.update_priorities(vec![0, 3, 5], vec![4.0, 0.25, 9.0]).unwrap();
    client.stats().unwrap();
    let text = String::from_utf8(metamimic(&["inspect-replay", "--endpoint", &endpoint]).stdout).unwrap();
    assert_eq!(stat(&text, "imitation_len"), "7");
    let priorities: Vec<f64> = hub.replay.snapshot().imitation.iter().map(|(_, p, _)| *p).collect();
    let expected: Vec<String> = priority_quantiles(&priorities).iter().map(|q| q.to_string()).collect();
    assert_eq!(stat(&text, "priority_quantiles"), expected.join(" "));
    server.shutdown();
}
