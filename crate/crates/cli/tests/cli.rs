use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn iaq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iaq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run iaq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn local_sum_on_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(&["query", "SUM(days) WHERE patient=3", "--local", "4", "-t", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("SUM(days) WHERE patient = 3 = 21"), "{out}");
    for phase in ["share", "network", "vspm", "db-multiply", "reconstruct"] {
        assert!(out.contains(phase), "missing {phase} timing in {out}");
    }
    assert!(out.contains("servers used: x = 4, 5"), "{out}");
}

#[test]
fn mean_prints_both_components() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(&["query", "MEAN(days) WHERE state=CA"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("= 2 (sum 4 / count 2)"), "{}", stdout(&o));
}

#[test]
fn batched_queries_in_one_round() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(
        &[
            "query",
            "COUNT(*) WHERE gender='Female' AND admit < 2022-06-01; COUNT(*) WHERE gender='Male'",
            "--essential",
            "--skip-zero-cols",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("< 2022-06-01 = 0"), "{out}");
    assert!(out.contains("gender = 'Male' = 3"), "{out}");
    assert!(out.contains("bucket gender (p=3, u=2), k=2"), "{out}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(&["query", "SUM(days WHERE patient=3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parse error"));

    let o = iaq(&["build-index", "--csv", "x.csv", "--schema", "nope.toml", "--group", "patient"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema file not found"), "{}", stderr(&o));

    let o = iaq(&["query", "SUM(days) WHERE patient=3", "--local", "2", "--down", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("need 2 responses, got 1"), "{}", stderr(&o));

    let o = iaq(&["bench", "vary-r", "--values", "2097152"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--full"));
}

#[test]
fn build_index_prints_golden_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(&["build-index", "--group", "patient", "--out", "idx"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("p=4 r=6 nnz=6"), "{out}");
    let rows: Vec<&str> = out.lines().filter_map(|l| l.trim().split_whitespace().next()).collect();
    for golden in ["100100", "010000", "001010", "000001"] {
        assert!(rows.contains(&golden), "{out}");
    }
    assert!(dir.path().join("idx/patient.iaq").is_file());

    let o = iaq(
        &["build-index", "--group", "state", "--order", "admit", "--max", "--keyword", "latest", "--out", "idx"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("000001  CA") && out.contains("000100  OR") && out.contains("000010  WA"), "{out}");
}

#[test]
fn batch_writes_recoverable_buckets() {
    let dir = tempfile::tempdir().unwrap();
    let ok = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
    ok(iaq(
        &["build-index", "--group", "gender", "--keyword", "duration", "--filter", "admit < 2022-06-01", "--out", "idx"],
        dir.path(),
    ));
    ok(iaq(&["build-index", "--group", "gender", "--keyword", "population", "--out", "idx"], dir.path()));
    let o = iaq(
        &["batch", "--index-dir", "idx", "--family", "duration", "--family", "population", "--coords", "2,3,4,5", "--out", "b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("every position recovers its index"));
    for c in 2..=5 {
        assert!(dir.path().join(format!("b/duration+population.x{c}.iaqb")).is_file());
    }
}

#[test]
fn synthetic_output_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = iaq(&["gen-synthetic", "--preset", "twitter", "--records", "40", "--seed", "9", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a/twitter.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/twitter.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 41);
}

#[test]
fn synthetic_table_round_trips_through_a_query() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(&["gen-synthetic", "--preset", "hospital", "--records", "60", "--seed", "3", "--out", "syn"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("deploy.toml"),
        "field = \"prime:m31\"\nservers = 3\n[[bucket]]\nkeyword = \"g\"\n[[bucket.family]]\nkeyword = \"g\"\ngroup = \"gender\"\n",
    )
    .unwrap();
    let csv = std::fs::read_to_string(dir.path().join("syn/hospital.csv")).unwrap();
    let mut rdr = csv.lines();
    let header: Vec<&str> = rdr.next().unwrap().split(',').collect();
    let (g, d) = (
        header.iter().position(|h| *h == "gender").unwrap(),
        header.iter().position(|h| *h == "days").unwrap(),
    );
    let expected: u64 = rdr
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[g] == "Other")
        .map(|c| c[d].parse::<u64>().unwrap())
        .sum();
    let o = iaq(
        &[
            "query",
            "SUM(days) WHERE gender='Other'",
            "--csv",
            "syn/hospital.csv",
            "--schema",
            "syn/hospital.toml",
            "--config",
            "deploy.toml",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&format!("= {expected}\n")), "{}", stdout(&o));
}

#[test]
fn bench_csv_header_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let o = iaq(
        &["bench", "vary-u", "--values", "2,4", "--r", "512", "--p", "16", "--trials", "1", "--out", "u.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("experiment,param,value,mean_seconds,throughput_qps,nnz_pct"));
    assert!(lines.next().unwrap().starts_with("vary-u,u,2,"));

    let o = iaq(
        &["bench", "--baseline", "goldberg", "--r", "4096", "--p", "16", "--trials", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("same result: true"), "{}", stdout(&o));
}

#[test]
fn serve_and_query_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_iaq"))
        .args(["serve", "--info", "client.json"])
        .current_dir(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let info = dir.path().join("client.json");
    let start = Instant::now();
    while !info.exists() && start.elapsed() < Duration::from_secs(30) {
        std::thread::sleep(Duration::from_millis(50));
    }
    let o = iaq(&["query", "SUM(days) WHERE patient=3", "--info", "client.json"], dir.path());
    let m = iaq(&["query", "MAX(admit) WHERE state='OR'", "--info", "client.json", "-t", "2"], dir.path());
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("= 21"), "{}", stdout(&o));
    assert!(stdout(&o).contains("4 of 4 servers answered"), "{}", stdout(&o));
    assert!(m.status.success(), "{}", stderr(&m));
    // 07-23-2022
    assert!(stdout(&m).contains("= 1658534400"), "{}", stdout(&m));
}
