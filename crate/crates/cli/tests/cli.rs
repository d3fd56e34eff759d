use std::fs;
use std::path::Path;
use std::process::Command;

use casimir_core::cases::{two_pole_film, CaseTag};
use casimir_core::dataset::{parse_feature_rows, split_dataset, Dataset};
use casimir_core::lifshitz::{FilmStack, ForceCurve};
use casimir_core::neuralnet::{mlp_init, Mlp, Standardizer};
use casimir_core::pipeline::{train_characterizer, CaseConfig};
use casimir_core::RunConfig;

const SMALL: &str = r#"
[case]
name = "two-pole-a"
size = 24
[grid]
d_min_nm = 50.0
count = 6
[quadrature]
rel_tol = 1e-6
gl_nodes = 32
"#;

fn casimir(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_casimir"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_dataset(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let ds = dir.join("ds.csv");
    let (code, _, err) = casimir(&["gen", "--config", p(&cfg), "--seed", "7", "--out", p(&ds), "-q"]);
    assert_eq!(code, 0, "{err}");
    ds
}

#[test]
fn gen_is_deterministic_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let first = fs::read(&ds).unwrap();
    let ds2 = dir.path().join("again.csv");
    let cfg = dir.path().join("small.toml");
    casimir(&["gen", "--config", p(&cfg), "--seed", "7", "--out", p(&ds2), "-q"]);
    assert_eq!(first, fs::read(&ds2).unwrap());

    let run = RunConfig::load(&cfg, None).unwrap();
    let lib = casimir_core::generate_dataset(&run.case.dataset, 7).unwrap();
    assert_eq!(String::from_utf8(first).unwrap(), lib.to_csv());
}

#[test]
fn zero_epochs_leaves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = small_dataset(dir.path());
    let model = dir.path().join("m.txt");
    let (code, _, err) = casimir(&[
        "train", "--dataset", p(&ds_path), "--seed", "5", "--epochs", "0", "--out", p(&model),
    ]);
    assert_eq!(code, 0, "{err}");
    let trained = Mlp::read(&model).unwrap();
    let init = mlp_init(trained.arch(), 5);
    assert_eq!(trained.params_flat(), init.params_flat());

    let ds = Dataset::read(&ds_path).unwrap();
    let (train_part, _) = split_dataset(&ds, 19, ds.master_seed).unwrap();
    let mut cfg = CaseConfig::preset(CaseTag::TwoPoleA);
    cfg.dataset = ds.config.clone();
    cfg.n_train = 19;
    cfg.train.seed = 5;
    cfg.train.epochs = 0;
    cfg.train.batch_size = 19;
    let (mut lib, _) = train_characterizer(&cfg, &train_part).unwrap();
    lib.meta.insert("split_seed".into(), "7".into());
    assert_eq!(lib.to_text(), fs::read_to_string(&model).unwrap());
    assert_eq!(
        trained.input,
        Some(Standardizer::fit(&train_part.features()).unwrap())
    );
}

#[test]
fn train_eval_predict_flow() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let model = dir.path().join("m.txt");
    let args = [
        "train", "--dataset", p(&ds), "--seed", "1", "--epochs", "30", "--batch-size", "6",
        "--out", p(&model), "-q",
    ];
    assert_eq!(casimir(&args).0, 0);
    let ev = dir.path().join("ev");
    let (code, stdout, _) = casimir(&["eval", "--model", p(&model), "--dataset", p(&ds), "--out", p(&ev)]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 2);
    let report = fs::read_to_string(ev.join("report.csv")).unwrap();
    assert!(report.starts_with("# tool=casimir-core"));
    assert!(report.contains("\nparameter,rmse\nt,"));
    let scatter = fs::read_to_string(ev.join("scatter_w02.csv")).unwrap();
    assert_eq!(scatter.lines().filter(|l| !l.starts_with('#')).count(), 1 + 5);

    let (code, stdout, _) = casimir(&["predict", "--model", p(&model), "--input", p(&ds)]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "row,t,w01,wp1,g1,w02,wp2,g2");
    assert_eq!(rows.len(), 25);
    let fields: Vec<f64> = rows[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert!(fields[1] > 0.0 && fields[5] > 0.0);
    assert_eq!(fields[6], 4.0 * fields[5]);
}

#[test]
fn denoiser_flow() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let ae = dir.path().join("ae.txt");
    let (code, _, err) = casimir(&[
        "denoise-train", "--dataset", p(&ds), "--seed", "2", "--epochs", "10", "--batch-size", "6",
        "--out", p(&ae), "-q",
    ]);
    assert_eq!(code, 0, "{err}");
    let model = Mlp::read(&ae).unwrap();
    assert_eq!(model.arch().to_string(), "6-12-4-12-6");
    assert_eq!(model.meta["kind"], "denoiser");

    let clean = dir.path().join("clean.csv");
    let (code, _, _) = casimir(&["denoise", "--model", p(&ae), "--input", p(&ds), "--out", p(&clean)]);
    assert_eq!(code, 0);
    let rows = parse_feature_rows(&fs::read_to_string(&clean).unwrap(), "clean").unwrap();
    let original = Dataset::read(&ds).unwrap();
    assert_eq!(rows.len(), original.len());
    assert_eq!(rows[3], model.predict(&original.incidences[3].x).unwrap());
}

#[test]
fn force_curve_matches_the_library() {
    let (code, stdout, _) =
        casimir(&["force-curve", "--case", "two-pole-a", "--t-nm", "100", "--w02", "1e15", "--count", "4"]);
    assert_eq!(code, 0);
    let film = two_pole_film(CaseTag::TwoPoleA, 100e-9, 1e15).unwrap();
    let gaps = casimir_core::GapGrid::new(5e-9, 2500e-9, 4).unwrap();
    let quad = RunConfig::preset(CaseTag::TwoPoleA).case.dataset.quad;
    let curve = ForceCurve::compute(&FilmStack::on_gold(&film), gaps.gaps(), &quad).unwrap();
    let mut lib = Vec::new();
    curve.write_csv(&mut lib, &[]).unwrap();
    let body: String = stdout
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(body, String::from_utf8(lib).unwrap());
}

#[test]
fn spectrum_of_an_explicit_film() {
    let (code, stdout, _) = casimir(&[
        "spectrum", "--case", "two-pole-b", "--w02", "8.74e15", "--set", "wp1=6e14", "--points", "5",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "omega_radps,re_eps,im_eps");
    assert_eq!(lines.len(), 6);
    assert!(stdout.contains("6.0000000000000000e14"));
}

#[test]
fn exit_codes() {
    assert_eq!(casimir(&["frobnicate"]).0, 1);
    assert_eq!(casimir(&["gen", "--case", "silicon", "--out", "x.csv"]).0, 1);
    assert_eq!(casimir(&["force-curve", "--case", "two-pole-a", "--bogus"]).0, 1);
    assert_eq!(casimir(&["--help"]).0, 0);
    let (code, _, err) = casimir(&["force-curve", "--case", "two-pole-a", "--t-nm", "-5"]);
    assert_eq!(code, 1);
    assert!(err.contains("thickness"));
    assert_eq!(casimir(&["force-curve", "--case", "six-pole"]).0, 1);
    assert_eq!(casimir(&["force-curve", "--case", "two-pole-a", "--set", "w09=1"]).0, 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[case]\nname = \"silicon\"\ncolour = 3\n").unwrap();
    let (code, _, err) = casimir(&["gen", "--config", p(&bad), "--seed", "1", "--out", "x.csv"]);
    assert_eq!(code, 1);
    assert!(err.contains("colour"), "{err}");

    let ds = small_dataset(dir.path());
    let (code, _, err) = casimir(&[
        "train", "--dataset", p(&ds), "--seed", "1", "--epochs", "20", "--batch-size", "6",
        "--learning-rate", "1e9", "--out", p(&dir.path().join("m")),
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(!dir.path().join("m").exists());
}

#[test]
fn dispatch_runs_in_process() {
    assert_eq!(casimir_cli::dispatch(["casimir", "nonsense"]), 1);
    assert_eq!(
        casimir_cli::dispatch(["casimir", "force-curve", "--case", "silicon", "--count", "2", "--out", "/dev/null/x.csv"]),
        1
    );
}
