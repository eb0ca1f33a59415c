use ionshelf::formats;
use ionshelf_cli::pipeline::{read_manifest, Outcome};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ionshelf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ionshelf")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_coarse_default_has_intervals_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    ok(&["simulate", "--seed", "42", "--out", s(&a)]);
    let text = std::fs::read_to_string(a.join("intervals.csv")).unwrap();
    let file = formats::read_intervals(text.as_bytes()).unwrap();
    assert!(!file.intervals.intervals.is_empty());
    ok(&["simulate", "--seed", "42", "--out", s(&a)]);
    assert_eq!(std::fs::read_to_string(a.join("intervals.csv")).unwrap(), text);
}

#[test]
fn simulate_tiny_duration_gives_valid_empty_file() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--duration", "0.001", "--out", s(tmp.path())]);
    let f = formats::read_intervals(std::fs::read(tmp.path().join("intervals.csv")).unwrap().as_slice()).unwrap();
    assert!(f.intervals.intervals.is_empty());
    assert_eq!(f.intervals.duration, 0.001);
}

#[test]
fn simulate_full_and_seed_list() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "simulate",
        "--mode",
        "full",
        "--duration",
        "0.01",
        "--seeds",
        "1,2,3",
        "--out",
        s(tmp.path()),
    ]);
    for seed in 1..=3u64 {
        let p = tmp.path().join(format!("seed-{seed}/trajectory.jsonl"));
        let t = formats::read_trajectory(std::fs::read(&p).unwrap().as_slice()).unwrap();
        assert_eq!(t.seed, seed);
        assert!(!t.jumps.is_empty());
    }
    let one = std::fs::read(tmp.path().join("seed-1/trajectory.jsonl")).unwrap();
    let single = tmp.path().join("single");
    ok(&["simulate", "--mode", "full", "--duration", "0.01", "--seed", "1", "--out", s(&single)]);
    assert_eq!(std::fs::read(single.join("trajectory.jsonl")).unwrap(), one);
}

fn write_bins_fixture(dir: &Path, counts: &[u64]) -> PathBuf {
    let mut text = String::from(
        "# format=ionshelf/bins\n# version=1\n# bin_width=0.01\n# t_start=0\n# duration=0.3\n# seed=0\n\
         # bright_count_rate=2000\n# dark_count_rate=0\n# mode=rate_model\n# efficiency=0.001\nt_start,counts\n",
    );
    for (k, c) in counts.iter().enumerate() {
        text.push_str(&format!("{},{c}\n", k as f64 * 0.01));
    }
    let p = dir.join("fixture_bins.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn detect_on_constructed_fixture() {
    let tmp = TempDir::new().unwrap();
    let mut counts = vec![20u64; 10];
    counts.extend([0; 10]);
    counts.extend([20; 10]);
    let bins = write_bins_fixture(tmp.path(), &counts);
    let out = ok(&["detect", "--input", s(&bins), "--threshold", "5", "--out", s(tmp.path())]);
    assert!(out.contains("1 dark periods"), "{out}");
    let (periods, meta) =
        formats::read_dark_periods(std::fs::read(tmp.path().join("dark_periods.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(periods.len(), 1);
    assert!((periods[0].t0 - 0.10).abs() < 1e-12);
    assert!((periods[0].t_end - 0.20).abs() < 1e-12);
    assert!((periods[0].dt - 0.10).abs() < 1e-12);
    assert_eq!(meta.get("threshold"), Some("5"));
    assert_eq!(meta.get("source_sha256").map(str::len), Some(64));
}

fn write_dark_fixture(dir: &Path, durations: &[f64]) -> PathBuf {
    let mut text = String::from("# format=ionshelf/dark_periods\n# version=1\n# min_dark_duration=0.07\nt0,t_end,dt\n");
    let mut t = 1.0;
    for d in durations {
        text.push_str(&format!("{t},{},{d}\n", t + d));
        t += d + 1.0;
    }
    let p = dir.join("fixture_dark.csv");
    std::fs::write(&p, text).unwrap();
    p
}

/// 150 draws `0.07 + Exp(0.14)` from a fixed stream.
fn draws_150() -> Vec<f64> {
    use rand::Rng;
    let mut rng = ionshelf::rng::seeded(150);
    (0..150).map(|_| 0.07 - 0.14 * (1.0 - rng.gen::<f64>()).ln()).collect()
}

#[test]
fn fit_mle_on_150_draws() {
    let tmp = TempDir::new().unwrap();
    let d = draws_150();
    let dark = write_dark_fixture(tmp.path(), &d);
    ok(&["fit", "--input", s(&dark), "--method", "mle", "--out", s(tmp.path())]);
    let r = formats::read_fit_report(std::fs::File::open(tmp.path().join("fit_report.json")).unwrap()).unwrap();
    // Oracle: arithmetic mean minus the truncation threshold.
    let mut sum = 0.0;
    for x in &d {
        sum += x;
    }
    let oracle = sum / 150.0 - 0.07;
    assert!((r.tau_hat_s - oracle).abs() < 1e-12);
    assert!((r.tau_hat_s - 0.14).abs() < 0.034, "{}", r.tau_hat_s);
    assert_eq!(r.n_events, 150);
    assert_eq!(r.method, "truncated_mean");
    assert!(r.diagnostics.conservation_ok);
    assert!(r.diagnostics.ks_statistic.is_some());
}

#[test]
fn fit_on_empty_file_is_empty_sample() {
    let tmp = TempDir::new().unwrap();
    let dark = write_dark_fixture(tmp.path(), &[]);
    let (c, err) = code(&["fit", "--input", s(&dark), "--out", s(tmp.path())]);
    assert_eq!(c, 6);
    assert!(err.contains("EmptySample"), "{err}");
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let t = s(tmp.path());
    assert_eq!(code(&["simulate", "--bogus"]).0, 2);
    assert_eq!(code(&["simulate", "--set", "duration=-1", "--out", t]).0, 4);
    assert_eq!(code(&["simulate", "--set", "nonsense=1", "--out", t]).0, 4);
    assert_eq!(code(&["simulate", "--format-version", "2", "--out", t]).0, 5);
    let missing = tmp.path().join("nope.csv");
    assert_eq!(code(&["fit", "--input", s(&missing), "--out", t]).0, 7);
    let garbage = tmp.path().join("garbage.csv");
    std::fs::write(&garbage, "hello\n").unwrap();
    assert_eq!(code(&["detect", "--input", s(&garbage), "--out", t]).0, 8);

    let cfg = tmp.path().join("v2.conf");
    std::fs::write(&cfg, "version = 2\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&cfg), "--out", t]).0, 5);
}

#[test]
fn newer_file_versions_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut counts = vec![20u64; 10];
    counts.extend([0; 10]);
    let bins = write_bins_fixture(tmp.path(), &counts);
    let text = std::fs::read_to_string(&bins).unwrap().replace("# version=1", "# version=2");
    std::fs::write(&bins, text).unwrap();
    let (c, err) = code(&["detect", "--input", s(&bins), "--threshold", "5", "--out", s(tmp.path())]);
    assert_eq!(c, 5, "{err}");
}

#[test]
fn staged_commands_match_pipeline() {
    let tmp = TempDir::new().unwrap();
    let conf = tmp.path().join("run.conf");
    std::fs::write(&conf, "version = 1\nduration = 3000\nseed = 7\n").unwrap();
    let staged = tmp.path().join("staged");
    let piped = tmp.path().join("piped");
    let c = s(&conf);
    ok(&["simulate", "--config", c, "--out", s(&staged)]);
    ok(&["render", "--config", c, "--input", s(&staged.join("intervals.csv")), "--out", s(&staged)]);
    ok(&["detect", "--config", c, "--input", s(&staged.join("bins.csv")), "--out", s(&staged)]);
    ok(&["fit", "--config", c, "--input", s(&staged.join("dark_periods.csv")), "--out", s(&staged)]);
    ok(&["pipeline", "--config", c, "--out", s(&piped)]);
    for f in ["intervals.csv", "bins.csv", "dark_periods.csv", "fit_report.json"] {
        assert_eq!(
            std::fs::read(staged.join(f)).unwrap(),
            std::fs::read(piped.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn pipeline_manifest_records_config_and_hashes() {
    let tmp = TempDir::new().unwrap();
    let conf = tmp.path().join("run.conf");
    let conf_text = "# short run\nversion = 1\nduration = 3000\nseed = 11\n";
    std::fs::write(&conf, conf_text).unwrap();
    let out = tmp.path().join("run");
    ok(&["pipeline", "--config", s(&conf), "--set", "detection.hysteresis_bins=2", "--out", s(&out)]);
    let m = read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config_file.as_deref(), Some(conf_text));
    assert!(m.overrides.contains(&"detection.hysteresis_bins=2".to_string()));
    assert!(m.resolved_config.contains("detection.hysteresis_bins = 2"));
    assert_eq!(m.outcome, Outcome::Ok);
    for f in &m.files {
        let bytes = std::fs::read(out.join(&f.name)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(ionshelf_cli::commands::sha256_file(&out.join(&f.name)).unwrap(), f.sha256);
    }
    // The saved config reproduces the run.
    let again = tmp.path().join("again");
    ok(&["pipeline", "--config", s(&out.join("config.txt")), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("bins.csv")).unwrap(),
        std::fs::read(again.join("bins.csv")).unwrap()
    );
}

#[test]
fn pipeline_without_shelving_reports_no_events() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let stdout = ok(&[
        "pipeline",
        "--set",
        "scheme.branch_p1_to_p0=0",
        "--duration",
        "600",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("no_events"), "{stdout}");
    let m = read_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(m.outcome, Outcome::NoEvents);
    assert_eq!(m.n_events, 0);
    assert!(m.tau_hat_s.is_none());
    assert!(!out.join("fit_report.json").exists());
    let (periods, _) =
        formats::read_dark_periods(std::fs::read(out.join("dark_periods.csv")).unwrap().as_slice()).unwrap();
    assert!(periods.is_empty());

    // Same outcome with a fixed threshold.
    let out2 = tmp.path().join("fixed");
    ok(&[
        "pipeline",
        "--set",
        "scheme.branch_p1_to_p0=0",
        "--set",
        "detection.threshold=5",
        "--duration",
        "600",
        "--out",
        s(&out2),
    ]);
    assert_eq!(read_manifest(&out2.join("manifest.json")).unwrap().outcome, Outcome::NoEvents);
}

#[test]
fn pipeline_rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&["pipeline", "--duration", "2000", "--seed", "3", "--out", s(&out)]);
    let first = dir_bytes(&out);
    ok(&["pipeline", "--duration", "2000", "--seed", "3", "--out", s(&out)]);
    assert_eq!(dir_bytes(&out), first);
}

#[test]
fn pipeline_full_mode_runs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&[
        "pipeline",
        "--mode",
        "full",
        "--set",
        "scheme.branch_p1_to_p0=1e-5",
        "--set",
        "scheme.excitation_rate=2e5",
        "--set",
        "detector.mode=per_photon",
        "--set",
        "detector.efficiency=0.1",
        "--duration",
        "20",
        "--out",
        s(&out),
    ]);
    let m = read_manifest(&out.join("manifest.json")).unwrap();
    assert!(m.files.iter().any(|f| f.name == "trajectory.jsonl"));
    assert!(m.n_events > 0, "{m:?}");
}

#[test]
fn report_commands() {
    let tmp = TempDir::new().unwrap();
    let mut counts = vec![20u64; 10];
    counts.extend([0; 10]);
    counts.extend([20; 10]);
    let bins = write_bins_fixture(tmp.path(), &counts);
    ok(&["detect", "--input", s(&bins), "--threshold", "5", "--out", s(tmp.path())]);
    let dark = tmp.path().join("dark_periods.csv");
    ok(&["report", "--kind", "telegraph", "--bins", s(&bins), "--dark", s(&dark), "--out", s(tmp.path())]);
    let svg = std::fs::read_to_string(tmp.path().join("telegraph.svg")).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("telegraph.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, counts.len());

    let missing = tmp.path().join("missing.csv");
    let (c, _) = code(&["report", "--kind", "telegraph", "--bins", s(&missing), "--dark", s(&dark)]);
    assert_eq!(c, 7);
    let (c, _) = code(&["report", "--kind", "survival", "--dark", s(&missing)]);
    assert_eq!(c, 7);
    assert_eq!(code(&["report", "--kind", "pie", "--dark", s(&dark)]).0, 2);
}

#[test]
fn survival_report_on_exact_exponential_is_straight() {
    let tmp = TempDir::new().unwrap();
    let (n, tau, t_s) = (1000usize, 0.14, 0.07);
    // Quantiles of t_s + Exp(tau): the empirical survival tracks the closed form to one count.
    let d: Vec<f64> = (0..n)
        .map(|i| t_s - tau * (1.0 - (i as f64 + 0.5) / n as f64).ln())
        .collect();
    let dark = write_dark_fixture(tmp.path(), &d);
    ok(&["report", "--kind", "survival_loglog", "--dark", s(&dark), "--out", s(tmp.path())]);
    roxmltree::Document::parse(&std::fs::read_to_string(tmp.path().join("survival.svg")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("survival.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (t, ln_n, model) = (f[0], f[3], f[4]);
        let exact = (n as f64).ln() - (t - t_s) / tau;
        assert!((ln_n - exact).abs() <= 0.02, "t={t}: {ln_n} vs {exact}");
        assert!((model - exact).abs() <= 0.02, "t={t}: model {model} vs {exact}");
        rows += 1;
    }
    assert!(rows >= 10);
}

#[test]
fn pipeline_default_recovers_lifetime() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&["pipeline", "--out", s(&out)]);
    let m = read_manifest(&out.join("manifest.json")).unwrap();
    assert!((100..=220).contains(&m.n_events), "{}", m.n_events);
    let (tau, se) = (m.tau_hat_s.unwrap(), m.tau_stderr_s.unwrap());
    assert!((tau - 0.14).abs() <= 3.0 * se, "{tau} +/- {se}");
    for f in ["survival.svg", "survival.csv", "telegraph.svg", "telegraph.csv", "fit_report.json"] {
        assert!(m.files.iter().any(|e| e.name == f), "{f} missing from manifest");
    }
}
