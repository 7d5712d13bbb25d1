use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_coupled-mimo");

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small SU-MISO scenario writing into `dir/out`.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            "[scenario]\ntopology = \"su_miso\"\nn_bs = 5\nusers = [1]\nspacing_bs = 0.4\n\
             n_realizations = 40\nseed = 9\n{extra}\n\
             [power]\nstart_dbw = -90.0\nstop_dbw = -60.0\npoints = 4\n\n\
             [output]\ndir = \"out\"\nemit = [\"rates_csv\", \"alpha_csv\", \"streams_csv\", \"kde_csv\", \"per_realization_json\"]\n"
        ),
    )
    .unwrap();
    path
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "effective_config.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn bundled_config_writes_rates_table() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(bundled("su_miso_n9_d035.toml")).unwrap();
    let out_dir = tmp.path().join("results");
    let text = text.replace("../../../results/su_miso_n9_d035", out_dir.to_str().unwrap());
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    let out = cli(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rates = fs::read_to_string(out_dir.join("rates.csv")).unwrap();
    let mut lines = rates.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("P_dBW,C_erg,R_erg_recip,R_erg_hyp"));
    assert_eq!(lines.count(), 11);
    for name in ["alpha.csv", "streams.csv", "kde.csv", "effective_config.toml"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("dir = \"out\"\n", "");
    fs::write(&cfg, text).unwrap();
    let target = tmp.path().join("from_env");
    let out = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap()])
        .env("COUPLED_MIMO_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("rates.csv").exists());
}

#[test]
fn missing_field_is_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("n_bs = 5\n", "");
    fs::write(&cfg, text).unwrap();
    let out = cli(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_bs"), "{}", stderr(&out));
}

#[test]
fn unknown_key_and_missing_file_are_invalid() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "spacing = 0.4");
    assert_eq!(cli(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(cli(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    assert!(cli(&["run", cfg.to_str().unwrap()]).status.success());
    let first = outputs(&tmp.path().join("out"));
    assert_eq!(first.len(), 5);
    assert!(cli(&["run", cfg.to_str().unwrap()]).status.success());
    assert_eq!(first, outputs(&tmp.path().join("out")));
}

#[test]
fn effective_config_reproduces_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path(), "");
    assert!(cli(&["run", cfg.to_str().unwrap()]).status.success());
    let out_dir = tmp.path().join("out");
    let first = outputs(&out_dir);

    let again = tmp.path().join("again");
    fs::create_dir(&again).unwrap();
    // the effective config pins the absolute output directory; drop it so
    // the replay lands somewhere fresh
    let effective: String = fs::read_to_string(out_dir.join("effective_config.toml"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("dir = "))
        .map(|l| format!("{l}\n"))
        .collect();
    let replay = again.join("effective.toml");
    fs::write(&replay, effective).unwrap();
    let out = Command::new(BIN)
        .args(["run", replay.to_str().unwrap()])
        .env("COUPLED_MIMO_OUT", again.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(first, outputs(&again.join("out")));
}

fn parse_matrix(text: &str) -> Vec<Vec<(f64, f64)>> {
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            v.chunks(2).map(|c| (c[0], c[1])).collect()
        })
        .collect()
}

#[test]
fn dump_impedance_single_element() {
    let out = cli(&["dump-impedance", "--n", "1", "--d", "0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let z = parse_matrix(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(z.len(), 1);
    assert!((z[0][0].0 - 73.08).abs() < 0.05 && (z[0][0].1 - 42.51).abs() < 0.05, "{z:?}");
}

#[test]
fn dump_impedance_far_pair() {
    let out = cli(&["dump-impedance", "--n", "2", "--d", "1000"]);
    assert!(out.status.success());
    let z = parse_matrix(&String::from_utf8(out.stdout).unwrap());
    let (re, im) = z[0][1];
    assert!((re.hypot(im) - 0.019085).abs() < 1e-4);
}

#[test]
fn dump_impedance_is_symmetric() {
    let out = cli(&["dump-impedance", "--n", "9", "--d", "0.35"]);
    assert!(out.status.success());
    let z = parse_matrix(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(z.len(), 9);
    for i in 0..9 {
        assert_eq!(z[i].len(), 9);
        for j in 0..9 {
            assert_eq!(z[i][j], z[j][i]);
        }
    }
}

#[test]
fn dump_impedance_rejects_bad_geometry() {
    assert_eq!(cli(&["dump-impedance", "--n", "0", "--d", "0.5"]).status.code(), Some(2));
    assert_eq!(cli(&["dump-impedance", "--n", "4", "--d", "-1"]).status.code(), Some(2));
}

#[test]
fn kde_rejects_degenerate_input() {
    let tmp = TempDir::new().unwrap();
    let out_path = tmp.path().join("d.csv");
    for (name, body) in [("const.txt", "0.5\n0.5\n0.5\n"), ("empty.txt", ""), ("junk.txt", "1\nabc\n")] {
        let input = tmp.path().join(name);
        fs::write(&input, body).unwrap();
        let out = cli(&["kde", input.to_str().unwrap(), out_path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", stderr(&out));
    }
}

#[test]
fn kde_density_integrates_to_one() {
    let tmp = TempDir::new().unwrap();
    // Box-Muller over a fixed LCG
    let mut state = 12345u64;
    let mut uniform = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    let mut text = String::new();
    for _ in 0..2000 {
        let (u, v) = (uniform(), uniform());
        let x = (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
        text.push_str(&format!("{x}\n"));
    }
    let input = tmp.path().join("x.txt");
    let output = tmp.path().join("d.csv");
    fs::write(&input, text).unwrap();
    let out = cli(&["kde", input.to_str().unwrap(), output.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(&output).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("x,density"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, d) = l.split_once(',').unwrap();
            (x.parse().unwrap(), d.parse().unwrap())
        })
        .collect();
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((area - 1.0).abs() < 1e-2, "area {area}");
}

#[test]
fn zero_imported_channel_aborts() {
    let tmp = TempDir::new().unwrap();
    let mut channels = String::new();
    for r in 0..3 {
        channels.push_str(&format!("{r},1,5\n"));
        let row = vec!["0.0"; 10].join(",");
        channels.push_str(&row);
        channels.push('\n');
    }
    fs::write(tmp.path().join("z21.csv"), channels).unwrap();
    let cfg = small_config(tmp.path(), "channel_file = \"z21.csv\"");
    let text = fs::read_to_string(&cfg).unwrap().replace("n_realizations = 40\n", "n_realizations = 3\n");
    fs::write(&cfg, text).unwrap();
    let out = cli(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn imported_channels_run() {
    let tmp = TempDir::new().unwrap();
    let mut channels = String::new();
    for r in 0..4 {
        channels.push_str(&format!("{r},1,5\n"));
        let row: Vec<String> = (0..5).map(|j| format!("{},{}", 0.01 * (r + j + 1) as f64, -0.005 * j as f64)).collect();
        channels.push_str(&row.join(","));
        channels.push('\n');
    }
    fs::write(tmp.path().join("z21.csv"), channels).unwrap();
    let cfg = small_config(tmp.path(), "channel_file = \"z21.csv\"");
    let text = fs::read_to_string(&cfg).unwrap().replace("n_realizations = 40\n", "n_realizations = 4\n");
    fs::write(&cfg, text).unwrap();
    let out = cli(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("out/rates.csv").exists());
}
