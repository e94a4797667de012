use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoi-vnf"))
}

#[test]
fn greedy_run_writes_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let st = bin()
            .args(["--agent", "greedy-cost", "--episodes", "2", "--eval-episodes", "1", "--steps", "5", "--seed", "1,2", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        assert!(String::from_utf8_lossy(&st.stdout).contains("greedy-cost rate 5"));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["greedy-cost-seed1.csv", "greedy-cost-seed2.csv", "summary.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("greedy-cost-seed1.csv")).unwrap();
    assert!(csv.starts_with("episode,steps,mean_reward,avg_aoi,total_cost,acceptance_rate,seed,"));
    assert_eq!(csv.lines().count(), 1 + 2 + 1);
}

#[test]
fn eval_only_reuses_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "agent = \"dqn\"\n[learning]\nhidden = [8]\nbatch = 4\nreplay_capacity = 16\n").unwrap();
    let train = tmp.path().join("train");
    let st = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--episodes", "1", "--eval-episodes", "0", "--steps", "4", "--out"])
        .arg(&train)
        .output()
        .unwrap();
    assert!(st.status.success());
    let eval = tmp.path().join("eval");
    let st = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["--eval-episodes", "2", "--steps", "4", "--eval-only"])
        .arg(train.join("dqn-seed0.ckpt.json"))
        .arg("--out")
        .arg(&eval)
        .output()
        .unwrap();
    assert!(st.status.success());
    let csv = std::fs::read_to_string(eval.join("dqn-seed0.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",eval,")).count(), 2);
    assert_eq!(csv.lines().filter(|l| l.contains(",train,")).count(), 0);
}

#[test]
fn bad_arguments_fail() {
    let st = bin().args(["--agent", "sarsa"]).output().unwrap();
    assert!(!st.status.success());
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "episodes = 1\nbogus = true\n").unwrap();
    let st = bin().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("error"));
}

#[test]
fn dump_config_round_trips() {
    let st = bin().args(["--dump-config", "--agent", "ddpg", "--seed", "3,4"]).output().unwrap();
    assert!(st.status.success());
    let text = String::from_utf8(st.stdout).unwrap();
    let cfg = aoi_vnf::experiment::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.agent, aoi_vnf::experiment::AgentChoice::Ddpg);
    assert_eq!(cfg.seeds, vec![3, 4]);
}
