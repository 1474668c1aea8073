use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_rebalsim");

const SMALL: &str = r#"
seeds = [4, 5]

[channels]
capacity_l = 1000
capacity_r = 1000

[fees]
base = 0
prop = 0.01
swap_prop = 0.005
miner = 2

[timing]
t_check = 10
t_conf = 10

[horizon]
kind = "drain"

[demand.l_to_r]
timing = { kind = "poisson", rate = 10 }
amount = { dist = "gaussian", mean = 25, std = 20 }
count_limit = 300

[demand.r_to_l]
timing = { kind = "poisson", rate = 2.5 }
amount = { dist = "gaussian", mean = 25, std = 20 }
count_limit = 75

[policy]
name = "autoloop"
"#;

fn rebalsim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_config(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn repo_configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn run_writes_traces_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let out = dir.path().join("out");
    let res = rebalsim(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_ok(&res);
    assert!(stdout(&res).contains("policy autoloop"));
    for seed in [4, 5] {
        assert!(out.join(format!("trace_seed{seed}.csv")).is_file());
    }
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("final_fortune"));
}

#[test]
fn run_accepts_seed_range_and_policy_override() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let out = dir.path().join("out");
    let res = rebalsim(&[
        "run", "--config", s(&cfg), "--seeds", "1..3", "--policy", "loopmax", "--out", s(&out),
    ]);
    assert_ok(&res);
    assert!(stdout(&res).contains("policy loopmax  seeds 3"));
    assert!(out.join("trace_seed3.csv").is_file());
}

#[test]
fn validate_trace_accepts_good_and_rejects_corrupted() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let out = dir.path().join("out");
    assert_ok(&rebalsim(&["run", "--config", s(&cfg), "--seed", "9", "--out", s(&out)]));
    let good = out.join("trace_seed9.csv");
    let res = rebalsim(&["validate-trace", s(&good)]);
    assert_ok(&res);
    assert!(stdout(&res).contains(": ok ("));

    let text = fs::read_to_string(&good).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "local_l").unwrap();
    let mut cells: Vec<String> = lines[3].split(',').map(str::to_owned).collect();
    let v: f64 = cells[col].parse().unwrap();
    cells[col] = (v + 1.0).to_string();
    lines[3] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let res = rebalsim(&["validate-trace", s(&good), s(&bad)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stdout(&res).contains("problems"));
}

#[test]
fn thresholds_report_feasible_and_infeasible_sizes() {
    let res = rebalsim(&["thresholds", "--prop", "0.01", "--swap-prop", "0.005", "--miner", "2"]);
    assert_ok(&res);
    let text = stdout(&res);
    assert!(text.contains("swap-in: 400"), "{text}");
    assert!(text.contains("swap-out: 396.0"), "{text}");

    let res = rebalsim(&["thresholds", "--prop", "0.004"]);
    assert_ok(&res);
    let text = stdout(&res);
    assert!(text.contains("swap-in: infeasible"), "{text}");
    assert!(text.contains("swap-out: infeasible"), "{text}");
}

#[test]
fn scenario_gets_stuck_after_two_payments() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("scenario.csv");
    let res = rebalsim(&["scenario-appendix-a", "--out", s(&csv)]);
    assert_ok(&res);
    let text = stdout(&res);
    assert!(text.contains("successes 2 of 20"), "{text}");
    assert!(text.contains("stuck from transaction 3"), "{text}");
    assert_ok(&rebalsim(&["validate-trace", s(&csv)]));

    let res = rebalsim(&["scenario-appendix-a", "--fee-prop", "0", "--transactions", "1000"]);
    assert_ok(&res);
    assert!(stdout(&res).contains("never stuck"));
}

#[test]
fn zero_action_agent_matches_no_rebalancing_and_replays() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let base = dir.path().join("base");
    assert_ok(&rebalsim(&[
        "run", "--config", s(&cfg), "--seed", "7", "--policy", "none", "--out", s(&base),
    ]));

    let served = dir.path().join("served");
    let agent = format!("'{BIN}' constant-agent --action 0,0");
    let res = rebalsim(&[
        "serve-agent", "--config", s(&cfg), "--seed", "7", "--agent-cmd", &agent, "--out",
        s(&served),
    ]);
    assert_ok(&res);
    assert!(stdout(&res).contains("episode 0  seed 7"));
    let episode = fs::read(served.join("episode0_seed7.csv")).unwrap();
    let reference = fs::read(base.join("trace_seed7.csv")).unwrap();
    assert!(episode == reference, "agent trace differs from no-rebalancing trace");

    let replayed = dir.path().join("replayed.csv");
    let log = served.join("episode0_seed7.actions.json");
    assert_ok(&rebalsim(&[
        "replay", "--config", s(&cfg), "--log", s(&log), "--out", s(&replayed),
    ]));
    assert!(fs::read(&replayed).unwrap() == episode);
}

#[test]
fn active_agent_episode_replays_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let served = dir.path().join("served");
    let agent = format!("'{BIN}' constant-agent --action 0.5,-0.5");
    assert_ok(&rebalsim(&[
        "serve-agent", "--config", s(&cfg), "--seeds", "2,3", "--agent-cmd", &agent, "--out",
        s(&served),
    ]));
    for (k, seed) in [(0, 2), (1, 3)] {
        let episode = served.join(format!("episode{k}_seed{seed}.csv"));
        let log = served.join(format!("episode{k}_seed{seed}.actions.json"));
        let replayed = dir.path().join(format!("replayed{k}.csv"));
        assert_ok(&rebalsim(&[
            "replay", "--config", s(&cfg), "--log", s(&log), "--out", s(&replayed),
        ]));
        assert!(fs::read(&replayed).unwrap() == fs::read(&episode).unwrap());
        assert_ok(&rebalsim(&["validate-trace", s(&episode)]));
    }
}

#[test]
fn sweep_uses_config_section_or_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        format!("{SMALL}\n[sweep]\nparam = \"fees.prop\"\nvalues = [0.002, 0.02]\n"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = rebalsim(&["sweep", "--config", s(&cfg), "--seed", "1", "--out", s(&out)]);
    assert_ok(&res);
    let text = stdout(&res);
    assert!(text.starts_with("fees.prop,mean,min,max"), "{text}");
    assert_eq!(text.lines().count(), 3);
    assert!(out.join("sweep.csv").is_file());

    let res = rebalsim(&[
        "sweep", "--config", s(&cfg), "--seed", "1", "--param", "timing.t_check", "--values",
        "10,20,30",
    ]);
    assert_ok(&res);
    assert_eq!(stdout(&res).lines().count(), 4);
}

#[test]
fn invalid_config_fails_with_field_name() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, SMALL.replace("t_conf = 10", "t_conf = 20")).unwrap();
    let res = rebalsim(&["run", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("t_check"), "{err}");

    let res = rebalsim(&["run", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn shipped_configs_load_and_validate() {
    let mut seen = 0;
    for sub in ["", "full"] {
        for entry in fs::read_dir(repo_configs().join(sub)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                rebalsim::experiment::load_config(&path)
                    .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
    }
    assert_eq!(seen, 11);
}

#[test]
fn shipped_alternating_config_matches_scenario() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = repo_configs().join("appendix-a.toml");
    assert_ok(&rebalsim(&["run", "--config", s(&cfg), "--out", s(&out)]));
    let text = fs::read_to_string(out.join("trace_seed0.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let ok = header.iter().position(|h| *h == "tx_succeeded").unwrap();
    let total: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(ok).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 2);
}
