use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fcaroute");

fn fcaroute(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("FCAROUTE_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fcaroute(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_dataset(dir: &Path, seed: &str) {
    ok(&[
        "gen",
        "--seed",
        seed,
        "--peers",
        "30",
        "--docs",
        "300",
        "--queries",
        "600",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

const SMALL_SCHEDULE: [&str; 6] = [
    "--warmup-queries",
    "150",
    "--update-schedule",
    "300,450",
    "--interval",
    "100",
];

fn with_schedule<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL_SCHEDULE).collect()
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    small_dataset(&a, "7");
    small_dataset(&b, "7");
    for f in ["peers.tsv", "documents.tsv", "queries.tsv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn gen_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fcaroute(&["gen", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));

    let out = fcaroute(&[
        "gen",
        "--peers",
        "4",
        "--degree",
        "4",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degree"));
}

#[test]
fn single_peer_flooding_run() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&[
        "gen",
        "--peers",
        "1",
        "--degree",
        "0",
        "--docs",
        "1",
        "--queries",
        "1",
        "--topics",
        "1",
        "--terms-per-topic",
        "5",
        "--out",
        ds.to_str().unwrap(),
    ]);
    let csv = ok(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--strategy",
        "flooding",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "interval,strategy,ttl,maintenance_mode,mean_recall,mean_messages,kb_concepts_mean,maintenance_work,queries_answered"
    );
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells[1], "flooding");
    assert_eq!(cells[4].parse::<f64>().unwrap(), 1.0);
    assert_eq!(cells[5].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn run_is_reproducible_and_recall_is_bounded() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "3");
    let args = with_schedule(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--strategy",
        "lps_v2",
    ]);
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let rows: Vec<&str> = first.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let recall: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&recall), "{row}");
    }
}

#[test]
fn run_reads_config_files_and_reports_bad_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "3");
    let cfg = tmp.path().join("sim.cfg");
    fs::write(&cfg, "# desk run\nstrategy=lps_v1\nttl=3\nwarmup_queries=150\nupdate_schedule=300,450\ninterval=300\n").unwrap();
    let csv = ok(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--ttl",
        "2",
    ]);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0,lps_v1,2,incremental,"));

    fs::write(&cfg, "ttl=3\nstrategy=gossip\n").unwrap();
    let out = fcaroute(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = fcaroute(&[
        "run",
        "--dataset",
        tmp.path().join("missing").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "3");
    let cfg = tmp.path().join("sim.cfg");
    fs::write(&cfg, "seed=5\nstrategy=flooding\n").unwrap();
    let base = with_schedule(&[
        "run",
        "--dataset",
        ds.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(&base).args(extra).env_remove("FCAROUTE_SEED");
        if let Some(s) = env {
            cmd.env("FCAROUTE_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let file_seed = run(&[], None);
    let env_seed = run(&[], Some("9"));
    assert_ne!(file_seed, env_seed);
    assert_eq!(env_seed, run(&["--seed", "9"], None));
    assert_eq!(file_seed, run(&["--seed", "5"], Some("9")));
}

#[test]
fn compare_grid_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "4");
    let args = with_schedule(&[
        "compare",
        "--dataset",
        ds.to_str().unwrap(),
        "--ttl",
        "3,4,5",
    ]);
    let csv = ok(&args);
    assert_eq!(csv, ok(&args));
    let (intervals, summary) = csv.split_once("\n\n").unwrap();
    assert_eq!(intervals.lines().count(), 1 + 6 * 6);
    let summary: Vec<&str> = summary.lines().collect();
    assert_eq!(
        summary[0],
        "strategy,ttl,maintenance_mode,mean_recall,mean_messages,total_maintenance_work,queries"
    );
    assert_eq!(summary.len(), 7);

    let out = fcaroute(&[
        "compare",
        "--dataset",
        ds.to_str().unwrap(),
        "--strategies",
        "",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = fcaroute(&with_schedule(&[
        "compare",
        "--dataset",
        ds.to_str().unwrap(),
        "--ttl",
        "1",
        "--strategies",
        "flooding",
    ]));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn kb_stats_rounds() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "5");
    let csv = ok(&with_schedule(&[
        "kb-stats",
        "--dataset",
        ds.to_str().unwrap(),
    ]));
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "maintenance_mode,round,at_query,peers_updated,e1_mean,e2_mean,work_total,work_mean,wall_ms_mean"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let (stat, inc): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r[0] == "static");
    assert_eq!(stat.len(), 3);
    // B0 is a full build in both series; every column but wall time agrees.
    assert_eq!(stat[0][1..8], inc[0][1..8]);
    let work = |rs: &[&Vec<&str>]| rs.iter().map(|r| r[6].parse::<u64>().unwrap()).sum::<u64>();
    assert!(work(&inc) < work(&stat));
}
