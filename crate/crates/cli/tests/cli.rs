use std::path::Path;
use std::process::{Command, Output};

fn snc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snc"))
        .args(args)
        .env(
            "SNC_PRESET_DIR",
            Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets"),
        )
        .output()
        .unwrap()
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scenario_id,kind,H,N,M,epsilon,theta_star,bound_value,bound_unit,stable,empirical_frequency,confidence_limit")
    );
    lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bound_on_first_hop_count() {
    let out = snc(&["bound", "--scenario", "voice-fig3", "--hops", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert_eq!(
        &r[0][..6],
        ["voice-fig3", "delay", "1", "781", "1953", "1e-9"]
    );
    assert!(r[0][6].parse::<f64>().unwrap() > 0.0);
    assert!(r[0][7].parse::<f64>().unwrap().is_finite());
    assert_eq!(r[0][8], "slots");
    assert_eq!(r[0][9], "true");
    assert_eq!(r[0][10], "");
}

#[test]
fn overload_exits_with_instability() {
    let out = snc(&["bound", "--scenario", "voice-fig3", "--through", "3000"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("C > N*alpha(theta) + M*alpha_c(theta)"),
        "{err}"
    );
    assert_eq!(rows(&out)[0][9], "false");
}

#[test]
fn unit_epsilon_gives_zero_delay() {
    let out = snc(&["bound", "--scenario", "voice-fig3", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(rows(&out)[0][7], "0.0");
}

#[test]
fn hop_sweep_is_linear_and_matches_bound() {
    let out = snc(&[
        "sweep-hops",
        "--scenario",
        "voice-fig3",
        "--hops",
        "1,2,5,10",
    ]);
    let r = rows(&out);
    let d: Vec<f64> = r.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(((d[3] - 10.0 * d[0]) / d[3]).abs() < 1e-9);
    assert!(r.iter().all(|row| row[6] == r[0][6]));
    let single = snc(&["sweep-hops", "--scenario", "voice-fig3", "--hops", "3"]);
    let bound = snc(&["bound", "--scenario", "voice-fig3", "--hops", "3"]);
    assert_eq!(single.stdout, bound.stdout);
}

#[test]
fn flow_sweep_is_monotone_and_flags_saturation() {
    let out = snc(&["sweep-flows", "--scenario", "voice-fig4-H2"]);
    assert_eq!(out.status.code(), Some(0));
    let d: Vec<f64> = rows(&out).iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]), "{d:?}");

    let dir = tempfile::tempdir().unwrap();
    // 1000 flows of 25.6 kbit/s fill 25.6 Mbit/s exactly
    let path = write(
        &dir,
        "edge.toml",
        r#"
id = "edge"
[units]
slot_length_s = 0.001
rate_unit = "kbit/s"
[traffic]
peak_rate = 64.0
mean_on_s = 0.4
mean_off_s = 0.6
through = 1
cross = 1
[network]
capacity = 25600.0
hops = 1
flow_pairs = [[400, 400], [500, 500]]
[bound]
epsilon = [1e-6]
"#,
    );
    let out = snc(&["sweep-flows", "--scenario", &path]);
    assert_eq!(out.status.code(), Some(0));
    let r = rows(&out);
    assert_eq!(r[0][9], "true");
    assert_eq!(r[1][9], "false");
    assert_eq!(r[1][7], "inf");
}

#[test]
fn out_flag_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    let out = snc(&[
        "bound",
        "--scenario",
        "voice-fig3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        snc(&["bound", "--scenario", "missing-preset"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(snc(&["bound"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "bad.toml", "id = \"x\"\ncolour = 3\n");
    let out = snc(&["bound", "--scenario", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn tiny_epsilon_at_desk_scale_is_inconclusive() {
    let out = snc(&[
        "validate",
        "--scenario",
        "desk-validation",
        "--epsilon",
        "1e-9",
        "--hops",
        "1",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Inconclusive"));
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        &dir,
        "small.toml",
        r#"
id = "small"
[units]
slot_length_s = 0.001
rate_unit = "kbit/s"
[traffic]
peak_rate = 64.0
mean_on_s = 0.04
mean_off_s = 0.06
through = 4
cross = 4
[network]
capacity = 300.0
hops = [1, 2]
[sim]
measure_slots = 20000
replications = 3
seed = 1
"#,
    );
    let a = snc(&["simulate", "--scenario", &path, "--jobs", "2"]);
    let b = snc(&["simulate", "--scenario", &path]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = snc(&["simulate", "--scenario", &path, "--seed", "2"]);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(rows(&a).len(), 4);
}

#[test]
fn self_test_halves_the_bounds() {
    let args = [
        "--scenario",
        "desk-validation",
        "--hops",
        "1",
        "--seed",
        "4",
    ];
    let plain = snc(&[&["validate"], &args[..]].concat());
    let halved = snc(&[&["validate", "--self-test"], &args[..]].concat());
    let (p, h) = (rows(&plain), rows(&halved));
    for (p, h) in p.iter().zip(&h) {
        let (p, h): (f64, f64) = (p[7].parse().unwrap(), h[7].parse().unwrap());
        assert_eq!(h, 0.5 * p);
    }
}
