//! End-to-end tests of the `vibronic-sync` binary: artefact emission,
//! flag overrides, determinism, and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vibronic-sync"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vibronic-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn presets_lists_all_four() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["pe545", "delocalised", "detuned", "swapped-rates"] {
        assert!(text.contains(name), "missing preset {name} in:\n{text}");
    }
}

#[test]
fn simulate_writes_artefacts_and_is_deterministic() {
    let dir = tempdir("simulate");
    let run = |out: &PathBuf| {
        let status = bin()
            .args(["simulate", "--preset", "pe545", "--m-levels", "2"])
            .args(["--t-end", "0.2", "--threads", "2"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    run(&dir);
    for name in ["trajectory.csv", "sync.csv", "manifest.json"] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    let header = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let header = header.lines().next().unwrap().to_string();
    assert!(header.starts_with("t_ps,"));
    for col in ["X1", "X2", "popE1", "popE2"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));

    let dir2 = tempdir("simulate-2");
    run(&dir2);
    assert_eq!(
        fs::read(dir.join("trajectory.csv")).unwrap(),
        fs::read(dir2.join("trajectory.csv")).unwrap(),
        "repeat run is not byte-identical"
    );
    fs::remove_dir_all(&dir).unwrap();
    fs::remove_dir_all(&dir2).unwrap();
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempdir("config");
    let config = r#"
sync_window = 0.03
spectrum_window = 0.1
pairs = "auto"
m_eig = 2

[params]
delta_e = 1042.0
v = 92.0
omega1 = 1111.0
omega2 = 1111.0
g1 = 267.1
g2 = 267.1
kbt = 207.1
gamma_th = 1.0
gamma_deph = 10.0
m_levels = 3

[propagation]
t_end = 1.0
dt_out = 0.002

[outputs]
trajectory = false
sync = true
spectra_at = []
coherences = false
eigenmodes = false
table2 = false
"#;
    let path = dir.join("scenario.toml");
    fs::write(&path, config).unwrap();
    // --t-end shortens the horizon set in the file
    let status = bin()
        .arg("sync")
        .arg("--config")
        .arg(&path)
        .args(["--t-end", "0.1", "--m-levels", "2"])
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let sync = fs::read_to_string(dir.join("sync.csv")).unwrap();
    let last = sync.lines().last().unwrap();
    let t_last: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!(t_last <= 0.1 + 1e-9, "horizon override ignored: t_last = {t_last}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn table2_passes_strict_for_the_reference_parameters() {
    let out = bin().args(["table2", "--preset", "pe545", "--strict"]).output().unwrap();
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("pass"));
}

#[test]
fn sweep_emits_summary_csv() {
    let dir = tempdir("sweep");
    let out = bin()
        .args(["sweep", "--preset", "pe545", "--m-levels", "2", "--t-end", "0.2"])
        .args(["--axis", "gamma_deph", "--values", "5,10"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("value,a,sync_onset_ps,max_pop_e1,lifetime_ps,status"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn error_exit_codes() {
    // unknown preset → configuration error
    let out = bin().args(["simulate", "--preset", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // unparsable config file → configuration error
    let dir = tempdir("badconfig");
    let path = dir.join("bad.toml");
    fs::write(&path, "params = 3\n").unwrap();
    let out = bin().arg("simulate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // both --config and --preset → configuration error
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&path)
        .args(["--preset", "pe545"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    fs::remove_dir_all(&dir).unwrap();
}
