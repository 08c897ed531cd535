use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_lbrs");

fn lbrs<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(BIN).args(args).env_remove("LBRS_KEY_DIR").output().unwrap()
}

fn ok<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(args: &[S]) -> String {
    let out = lbrs(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn keygen_writes_reloadable_keys() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["keygen", "--bits", "256", "--out-dir", p(dir.path()), "--seed", "3"]);
    let public: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("public.json")).unwrap()).unwrap();
    let secret: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("secret.json")).unwrap()).unwrap();
    let n = public["n"].as_str().unwrap();
    assert_eq!(n.len(), 64, "256-bit modulus in hex");
    assert_eq!(secret["n"], public["n"]);
    for field in ["phi", "p", "q", "x0", "x1"] {
        assert!(secret[field].is_string(), "{field}");
        assert!(public.get(field).is_none(), "{field} leaked into public.json");
    }

    // the same seed gives the same keys
    let again = tempfile::tempdir().unwrap();
    ok(&["keygen", "--bits", "256", "--out-dir", p(again.path()), "--seed", "3"]);
    assert_eq!(std::fs::read(dir.path().join("secret.json")).unwrap(), std::fs::read(again.path().join("secret.json")).unwrap());
}

#[test]
fn gen_data_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-data", "--pois", "12", "--users", "4", "--seed", "9", "--out", p(dir.path())]);
    for file in ["meta.json", "inversion.csv", "pvs.csv", "pv.csv", "placements.csv"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let data = lbrs::dataset::Dataset::read(dir.path()).unwrap();
    assert_eq!(data.meta.pois, 12);
    assert_eq!(data.meta.users, 4);
}

#[test]
fn bench_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    ok(&["bench", "--sizes", "3,4", "--reps", "1", "--bits", "128", "--format", "csv", "--no-warmup", "--out", p(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = lbrs::bench::parse_csv(&text).unwrap();
    assert_eq!(rows.iter().map(|r| r.size).collect::<Vec<_>>(), vec![3, 4]);
    assert!(rows.iter().all(|r| r.rec_time_s > 0.0));
}

#[test]
fn exit_codes() {
    assert_eq!(lbrs(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lbrs(&["gen-data", "--out", "/tmp"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = lbrs(&["gen-data", "--pois", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = lbrs(&["bench", "--sizes", "0", "--bits", "128"]);
    assert_eq!(out.status.code(), Some(1));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(args: &[&str]) -> (Server, String) {
    let mut child = Command::new(BIN).args(args).stdout(Stdio::piped()).stderr(Stdio::null()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected {line:?}")).to_string();
    (Server(child), addr)
}

#[test]
fn client_session_over_tcp() {
    let keys = tempfile::tempdir().unwrap();
    let shares = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    ok(&["keygen", "--bits", "128", "--out-dir", p(keys.path()), "--seed", "5"]);
    ok(&["gen-data", "--pois", "6", "--users", "3", "--seed", "5", "--out", p(data.path())]);

    let (_x, proxy) = serve(&["serve", "--role", "proxy", "--listen", "127.0.0.1:0", "--keys", p(shares.path())]);
    let (_y, server) =
        serve(&["serve", "--role", "y", "--listen", "127.0.0.1:0", "--proxy", &proxy, "--keys", p(shares.path()), "--seed", "1"]);
    let ends = ["--server", server.as_str(), "--proxy", proxy.as_str(), "--keys", p(keys.path())];

    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter().chain(&ends).chain(tail).map(|s| s.to_string()).collect()
    };
    ok(&with(&["client", "init"], &["--data", p(data.path())]));
    let session: serde_json::Value =
        serde_json::from_slice(&std::fs::read(keys.path().join("session.json")).unwrap()).unwrap();
    let id = session["session"].as_u64().unwrap();
    assert!(shares.path().join(format!("proxy_share_{id}.json")).is_file());
    assert!(shares.path().join(format!("server_share_{id}.json")).is_file());

    let dataset = lbrs::dataset::Dataset::read(data.path()).unwrap();
    let pv_path = data.path().join("pv.csv");
    let cell = dataset.placements[3];
    let loc = format!("{},{}", cell.x, cell.y);
    let stdout = ok(&with(&["client", "recommend"], &["--pv", p(&pv_path), "--loc", &loc]));
    assert!(stdout.starts_with("location index 3\nitem,score\n"), "{stdout}");

    let pv = lbrs::dataset::read_pv(&pv_path, 15).unwrap();
    let cm = dataset.co_matrix().unwrap();
    let expected = lbrs::recommender::recommend_plain(&cm, &pv, 3, 1).unwrap();
    let got: Vec<(usize, u64)> = stdout
        .lines()
        .skip(2)
        .map(|l| {
            let (i, s) = l.split_once(',').unwrap();
            (i.parse().unwrap(), s.parse().unwrap())
        })
        .collect();
    assert_eq!(got, expected.iter().map(|r| (r.item, r.score)).collect::<Vec<_>>());

    // an update needs matrices of the right size; a wrong one aborts the session
    let old = data.path().join("old.csv");
    let new = data.path().join("new.csv");
    let zeros = lbrs::recommender::CoMatrix::zeros(6);
    let mut lists = lbrs::recommender::InversionList::new();
    lists.extend(50, [0, 5]);
    lbrs::dataset::write_matrix(&old, &zeros).unwrap();
    lbrs::dataset::write_matrix(&new, &lbrs::recommender::build_cm(&lists, 6).unwrap()).unwrap();
    ok(&with(&["client", "update"], &["--old", p(&old), "--new", p(&new)]));
    let stdout = ok(&with(&["client", "recommend"], &["--pv", p(&pv_path), "--loc", &loc]));
    assert!(stdout.starts_with("location index 3\n"));

    lbrs::dataset::write_matrix(&new, &lbrs::recommender::CoMatrix::zeros(4)).unwrap();
    let out = lbrs(&with(&["client", "update"], &["--old", p(&old), "--new", p(&new)]));
    assert_ne!(out.status.code(), Some(0));
}
