use std::path::Path;
use std::process::{Command, Output};

fn dsdiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsdiff"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = dsdiff(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

const SMALL: &str = r#"
output_dir = "run"

[schedule]
steps = 4

[backbone]
base_channels = 4
epochs = 1
batch_size = 16

[guidance]
layers = 1
model_dim = 8
heads = 2
ff_dim = 16
epochs = 1
batch_size = 16

[sampling]
count = 24

[evaluation]
iterations = 5
batch_size = 16
replicates = 1
"#;

fn pipeline(dir: &Path) {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    let c = ["--config", "small.toml"];
    ok(dir, &[&c[..], &["gen-data", "--samples", "40", "--features", "2"]].concat());
    ok(dir, &[&c[..], &["train-backbone", "--data", "run/sine.dsds"]].concat());
    ok(dir, &[&c[..], &["train-guidance", "--data", "run/sine.dsds", "--backbone", "run/backbone.dsdf"]].concat());
}

fn generate(dir: &Path, out: &str, extra: &[&str]) -> Vec<u8> {
    let base = [
        "--config",
        "small.toml",
        "generate",
        "--backbone",
        "run/backbone.dsdf",
        "--trend",
        "run/guidance_trend.dsdf",
        "--seasonal",
        "run/guidance_seasonal.dsdf",
        "--data",
        "run/sine.dsds",
        "--seed",
        "7",
        "--out",
        out,
    ];
    ok(dir, &[&base[..], extra].concat());
    std::fs::read(dir.join(out)).unwrap()
}

#[test]
fn full_pipeline_is_reproducible_and_leaves_inputs_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let data_before = std::fs::read(dir.join("run/sine.dsds")).unwrap();

    let a = generate(dir, "run/a.dsds", &[]);
    let b = generate(dir, "run/b.dsds", &[]);
    assert_eq!(a, b);
    assert_eq!(&a[..4], b"DSDS");
    let sidecar = std::fs::read_to_string(dir.join("run/a.styles.csv")).unwrap();
    assert_eq!(sidecar.lines().count(), 25);
    assert!(sidecar.starts_with("sample,style_index,source\n"));

    let pinned = generate(dir, "run/pinned.dsds", &["--style-index", "3"]);
    assert_ne!(pinned, a);
    let pinned_styles = std::fs::read_to_string(dir.join("run/pinned.styles.csv")).unwrap();
    assert!(pinned_styles.lines().skip(1).all(|l| l.ends_with(",3,3")));

    let u1 = generate(dir, "run/u1.dsds", &["--unguided"]);
    let u2 = generate(dir, "run/u2.dsds", &["--unguided"]);
    assert_eq!(u1, u2);
    assert_ne!(u1, a);

    let o = ok(
        dir,
        &["--config", "small.toml", "evaluate", "--real", "run/sine.dsds", "--generated", "run/a.dsds"],
    );
    let report = std::fs::read_to_string(dir.join("run/metrics.txt")).unwrap();
    for key in ["disc", "pred", "kl", "js", "wass", "ks"] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{key} = "))), "missing {key}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("disc\tpred"));

    ok(
        dir,
        &["--config", "small.toml", "export-plots", "--real", "run/sine.dsds", "--generated", "run/a.dsds"],
    );
    let pca = std::fs::read_to_string(dir.join("run/pca.csv")).unwrap();
    assert_eq!(pca.lines().count(), 1 + 40 + 24);

    assert_eq!(std::fs::read(dir.join("run/sine.dsds")).unwrap(), data_before);
    let log = std::fs::read_to_string(dir.join("run/provenance.log")).unwrap();
    assert!(log.contains("command = generate"));
    assert!(log.contains("seed = 7"));
    assert!(log.contains("config_sha256 = "));
    assert!(log.contains("input = run/sine.dsds sha256:"));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["gen-data", "--bogus"], &[]] {
        let o = dsdiff(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
    let o = dsdiff(tmp.path(), &["generate", "--guided", "--unguided", "--backbone", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.toml"), "[backbone]\nepoch = 3\n").unwrap();
    let o = dsdiff(dir, &["--config", "bad.toml", "gen-data"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[config]"));

    let o = dsdiff(dir, &["gen-data", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(dir.join("short.csv"), "a,b\n1,2\n3,4\n").unwrap();
    let o = dsdiff(dir, &["ingest", "--input", "short.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[insufficient-data]"));

    std::fs::write(dir.join("junk.dsds"), b"not a dataset").unwrap();
    let o = dsdiff(dir, &["export-plots", "--real", "junk.dsds", "--generated", "junk.dsds"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[format]"));
}

#[test]
fn ingest_windows_csv_and_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("t;x;y\n");
    for r in 0..100 {
        csv.push_str(&format!("{r};{};{}\n", (r as f64 * 0.3).sin(), r % 5));
    }
    std::fs::write(dir.join("in.csv"), &csv).unwrap();
    std::fs::write(dir.join("c.toml"), "[data]\ndelimiter = \";\"\nlength = 10\n").unwrap();
    let o = ok(
        dir,
        &["--config", "c.toml", "ingest", "--input", "in.csv", "--length", "24", "--columns", "1,2"],
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("wrote 77 windows"));
    let bytes = std::fs::read(dir.join("out/ingested.dsds")).unwrap();
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 24);
    assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2);

    let o = dsdiff(dir, &["ingest", "--input", "in.csv", "--out", "in.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(dir.join("in.csv")).unwrap(), csv);
}

#[test]
fn guided_generation_requires_guidance_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let o = dsdiff(dir, &["--config", "small.toml", "generate", "--backbone", "run/backbone.dsdf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--trend"));
}
