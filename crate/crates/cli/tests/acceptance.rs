//! Acceptance checks. Prints one PASS/FAIL line per criterion and a summary.
//! Exits non-zero only when a check panics; failing criteria are reported,
//! not hidden, so `cargo test` stays usable. Set `ACCEPTANCE_STRICT=1` to
//! turn any hard failure into a non-zero exit.
//!
//! Reduced training budgets keep the whole run to a few minutes; the
//! training-heavy checks run on separate threads.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use casimir_core::cases::{reference, two_pole_film, CaseTag};
use casimir_core::dataset::{feature_vector, generate_dataset, split_dataset, with_noise, GapGrid};
use casimir_core::lifshitz::{
    film_reflection, fresnel_r, FilmStack, LifshitzSolver, PerfectMirrors, Polarization,
    QuadratureConfig, ROOM_TEMPERATURE,
};
use casimir_core::materials::{consts, gold_drude, sample_film};
use casimir_core::neuralnet::{backprop_grad, mlp_init, pearson, CostKind, Mlp, MlpArch};
use casimir_core::pipeline::{
    damping_vs_frequency_rmse, denoise, predict_film, run_case, train_denoiser, CaseConfig,
    DenoiserConfig,
};
use casimir_core::seeding;
use rand::Rng;

struct Outcome {
    pass: bool,
    /// Failing does not fail the run.
    warning_only: bool,
    detail: String,
}

impl Outcome {
    fn hard(pass: bool, detail: String) -> Self {
        Outcome {
            pass,
            warning_only: false,
            detail,
        }
    }
}

type Check = fn() -> Outcome;

const CHECKS: [(&str, Check); 10] = [
    ("pec-limit", pec_limit),
    ("composition-identity", composition_identity),
    ("derivative-oracle", derivative_oracle),
    ("gradient-oracle", gradient_oracle),
    ("two-pole-inversion", two_pole_inversion),
    ("two-pole-roundtrip", two_pole_roundtrip),
    ("four-pole-damping", four_pole_damping),
    ("denoiser", denoiser),
    ("cutoff-insensitivity", cutoff_insensitivity),
    ("cli-determinism", cli_determinism),
];

/// Indices (0-based) that train networks and run concurrently.
const HEAVY: [usize; 4] = [4, 5, 6, 7];

fn main() {
    let started = Instant::now();
    let mut results: Vec<Option<(Outcome, f64)>> = (0..CHECKS.len()).map(|_| None).collect();
    let mut panicked = false;
    std::thread::scope(|s| {
        let handles: Vec<_> = HEAVY
            .iter()
            .map(|&i| (i, s.spawn(move || timed(CHECKS[i].1))))
            .collect();
        for (i, (_, check)) in CHECKS.iter().enumerate() {
            if !HEAVY.contains(&i) {
                results[i] = Some(timed(*check));
            }
        }
        for (i, h) in handles {
            results[i] = Some(h.join().unwrap_or_else(|_| {
                panicked = true;
                (Outcome::hard(false, "panicked".into()), 0.0)
            }));
        }
    });

    let mut failed = 0;
    let mut warned = 0;
    for (i, r) in results.into_iter().enumerate() {
        let (o, secs) = r.expect("every check ran");
        let tag = match (o.pass, o.warning_only) {
            (true, _) => "PASS",
            (false, true) => {
                warned += 1;
                "FAIL (warning-level)"
            }
            (false, false) => {
                failed += 1;
                "FAIL"
            }
        };
        println!("{tag} {:>2} {}: {} [{secs:.1} s]", i + 1, CHECKS[i].0, o.detail);
    }
    println!(
        "acceptance: {} of {} criteria passed, {failed} hard failure(s), finished in {:.0} s",
        CHECKS.len() - failed - warned,
        CHECKS.len(),
        started.elapsed().as_secs_f64()
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if panicked || (strict && failed > 0) {
        std::process::exit(1);
    }
}

fn timed(check: Check) -> (Outcome, f64) {
    let t = Instant::now();
    let o = check();
    (o, t.elapsed().as_secs_f64())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Normalized pressure of ideal mirrors at 300 K, read at two decimals.
/// Independent oracle: the low-temperature expansion `1 + (2kTd/ħc)⁴/3`.
fn pec_limit() -> Outcome {
    let solver = LifshitzSolver::new(&QuadratureConfig::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for d_nm in [50.0, 100.0, 200.0, 500.0] {
        let d = d_nm * 1e-9;
        let pn = solver.evaluate(&PerfectMirrors::default(), d).unwrap().normalized();
        let t = 2.0 * consts::KB * ROOM_TEMPERATURE * d / (consts::HBAR * consts::C);
        let oracle = 1.0 + t.powi(4) / 3.0;
        let two_decimals = (pn * 100.0).round() / 100.0;
        pass &= (0.99..=1.00).contains(&two_decimals) && (pn - oracle).abs() < 5e-7;
        parts.push(format!("{d_nm} nm {pn:.8} (oracle {oracle:.8})"));
    }
    Outcome::hard(pass, parts.join(", "))
}

fn composition_identity() -> Outcome {
    let mut rng = seeding::derived_rng(11, &[0]);
    let ranges = CaseTag::FourPole.ranges();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let film = sample_film(&ranges, &mut rng).unwrap();
        let stack = FilmStack::new(gold_drude(), film.film, gold_drude(), 1e-30, 300.0).unwrap();
        let xi = 10f64.powf(rng.random_range(12.0..18.0));
        let kpar = 10f64.powf(rng.random_range(4.0..10.0));
        let pol = if rng.random::<bool>() { Polarization::P } else { Polarization::S };
        let composed = film_reflection(&stack, xi, kpar, pol).unwrap();
        let e3 = stack.substrate.eps_imag_axis(xi).unwrap();
        let direct = fresnel_r(1.0, e3, xi, kpar, pol).unwrap();
        worst = worst.max(rel(composed, direct));
    }
    Outcome::hard(worst <= 1e-12, format!("max relative difference {worst:.2e} over 1000 tuples"))
}

/// Central differences of `P̃` against the analytic derivative. Both sides use
/// a refined k∥ rule; the default rule's figure is reported alongside.
fn derivative_oracle() -> Outcome {
    let refined = QuadratureConfig {
        rel_tol: 1e-13,
        gl_nodes: 256,
        ..QuadratureConfig::default()
    };
    let worst_with = |quad: &QuadratureConfig| -> f64 {
        let solver = LifshitzSolver::new(quad).unwrap();
        let mut rng = seeding::derived_rng(12, &[0]);
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let case = CaseTag::ALL[k % 4];
            let film = sample_film(&case.ranges(), &mut rng).unwrap();
            let stack = FilmStack::on_gold(&film);
            let d = 10f64.powf(rng.random_range((5e-9f64).log10()..(2.5e-6f64).log10()));
            let analytic = solver.evaluate(&stack, d).unwrap().dnormalized_dz_um();
            let h = d * 1e-4;
            let up = solver.evaluate(&stack, d + h).unwrap().normalized();
            let down = solver.evaluate(&stack, d - h).unwrap().normalized();
            let fd = (up - down) / (2.0 * h) * 1e-6;
            worst = worst.max(rel(fd, analytic));
        }
        worst
    };
    let worst = worst_with(&refined);
    let default = worst_with(&QuadratureConfig::default());
    Outcome::hard(
        worst <= 1e-4,
        format!("max relative difference {worst:.2e} over 100 pairs with 256 k∥ nodes ({default:.2e} with the default 64)"),
    )
}

fn gradient_oracle() -> Outcome {
    let mut rng = seeding::derived_rng(13, &[0]);
    let mut rows = |n: usize, dim: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect()
    };
    let char_x = rows(6, 20);
    let char_y = rows(6, 13);
    let ae_x = rows(6, 20);
    let cases = [
        (MlpArch::characterizer(20, 13), &char_x, &char_y, CostKind::LogTargetSse),
        (MlpArch::autoencoder(20), &ae_x, &ae_x, CostKind::ReconstructionSse),
    ];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (arch, xs, ys, cost) in cases {
        let mlp = mlp_init(&arch, 4);
        let grad = backprop_grad(&mlp, xs, ys, cost).unwrap().flat();
        let base = mlp.params_flat();
        let mut probe = mlp.clone();
        let outputs = |m: &Mlp| -> Vec<Vec<f64>> {
            xs.iter().map(|x| m.forward(x).unwrap().output().to_vec()).collect()
        };
        // (a−t)² − (b−t)² = (a−b)(a+b−2t) avoids differencing two large sums
        let mut central = |k: usize, h: f64| -> f64 {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_params_flat(&p).unwrap();
            let up = outputs(&probe);
            p[k] = base[k] - h;
            probe.set_params_flat(&p).unwrap();
            let down = outputs(&probe);
            let mut delta = 0.0;
            for ((u, d), y) in up.iter().zip(&down).zip(ys.iter()) {
                for j in 0..y.len() {
                    delta += (u[j] - d[j]) * (u[j] + d[j] - 2.0 * y[j]);
                }
            }
            delta / (2.0 * h)
        };
        for k in 0..base.len() {
            if grad[k].abs() <= 1e-8 {
                continue;
            }
            let h = 1e-3;
            let fd = (4.0 * central(k, h / 2.0) - central(k, h)) / 3.0;
            worst = worst.max(rel(fd, grad[k]));
            checked += 1;
        }
    }
    Outcome::hard(
        worst <= 1e-5,
        format!("max relative difference {worst:.2e} over {checked} weights (20-20-20-20-13, 20-12-4-12-20)"),
    )
}

fn train_case(case: CaseTag, epochs: usize, seed: u64) -> (CaseConfig, casimir_core::pipeline::CaseOutcome) {
    let mut cfg = CaseConfig::preset(case);
    cfg.train.epochs = epochs;
    cfg.train.seed = seed;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_case(&cfg, seed, None, dir.path()).unwrap();
    (cfg, outcome)
}

fn two_pole_inversion() -> Outcome {
    let epochs = 50_000;
    let (_, out) = train_case(CaseTag::TwoPoleA, epochs, 1);
    let rt = out.report.rmse_of("t").unwrap();
    let rw = out.report.rmse_of("w02").unwrap();
    let r = pearson(&out.report.pairs[1]);
    Outcome::hard(
        rt <= 0.2 && rw <= 0.2 && r >= 0.95,
        format!("{epochs} epochs: RMSE ln t {rt:.4}, ln w02 {rw:.4}; Pearson ln w02 {r:.4}"),
    )
}

fn two_pole_roundtrip() -> Outcome {
    let epochs = 50_000;
    let (cfg, out) = train_case(CaseTag::TwoPoleB, epochs, 1);
    let (case, t, w) = reference::TWO_POLE_TRUE_B;
    let film = two_pole_film(case, t, w).unwrap();
    let x = feature_vector(&film, &cfg.dataset.grid, &cfg.dataset.quad).unwrap();
    let p = predict_film(&out.mlp, &cfg.dataset.ranges, &x).unwrap().sample;
    let (et, ew) = (rel(p.thickness, t), rel(p.film.poles()[1].omega0, w));
    Outcome::hard(
        et <= 0.15 && ew <= 0.15,
        format!(
            "predicted t {:.1} nm ({:+.1}%), w02 {:.3e} rad/s ({:+.1}%)",
            p.thickness * 1e9,
            100.0 * (p.thickness / t - 1.0),
            p.film.poles()[1].omega0,
            100.0 * (p.film.poles()[1].omega0 / w - 1.0),
        ),
    )
}

fn four_pole_damping() -> Outcome {
    let epochs = 20_000;
    let (_, out) = train_case(CaseTag::FourPole, epochs, 1);
    let (g, f) = damping_vs_frequency_rmse(&out.report);
    Outcome {
        pass: g > f,
        warning_only: true,
        detail: format!("{epochs} epochs: mean RMSE damping {g:.3} vs frequencies {f:.3}"),
    }
}

fn denoiser() -> Outcome {
    let case = CaseConfig::preset(CaseTag::Silicon);
    let ds = generate_dataset(&case.dataset, 1).unwrap();
    let (train, test) = split_dataset(&ds, case.n_train, ds.master_seed).unwrap();
    let mut cfg = DenoiserConfig::default();
    cfg.train.epochs = 20_000;
    cfg.train.learning_rate = 0.04;
    cfg.train.seed = 1;
    let (ae, _) = train_denoiser(&train.features(), &cfg).unwrap();
    let noisy = with_noise(&test, 0.02, 2);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let (mut e_noisy, mut e_out) = (0.0, 0.0);
    for (clean, dirty) in test.incidences.iter().zip(&noisy.incidences) {
        e_noisy += sq(&dirty.x, &clean.x);
        e_out += sq(&denoise(&ae, &dirty.x).unwrap(), &clean.x);
    }
    let n = test.len() as f64;
    let ratio = e_out / e_noisy;
    Outcome::hard(
        ratio <= 0.5,
        format!(
            "{} epochs: mean |X^-X|^2 {:.3e} vs noisy {:.3e} (ratio {ratio:.3})",
            cfg.train.epochs,
            e_out / n,
            e_noisy / n
        ),
    )
}

fn cutoff_insensitivity() -> Outcome {
    let quad = QuadratureConfig::default();
    let solver = LifshitzSolver::new(&quad).unwrap();
    let grid = GapGrid::for_case(CaseTag::TwoPoleA);
    let curve = |w02: f64| -> Vec<f64> {
        let stack = FilmStack::on_gold(&two_pole_film(CaseTag::TwoPoleA, 100e-9, w02).unwrap());
        grid.gaps()
            .iter()
            .map(|&d| solver.evaluate(&stack, d).unwrap().normalized())
            .collect()
    };
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max);
    let top = curve(1e21);
    let c16 = curve(1e16);
    let high = max_diff(&c16, &top);
    let low = max_diff(&curve(3e14), &curve(1e15));
    let far = max_diff(&curve(1e18), &top);
    let onset = grid
        .gaps()
        .iter()
        .zip(c16.iter().zip(&top))
        .find(|(_, (a, b))| rel(**a, **b) < 0.01)
        .map_or(f64::NAN, |(d, _)| d * 1e9);
    Outcome::hard(
        high < 0.01 && low > 0.05,
        format!(
            "max difference 1e16 vs 1e21: {:.2}% (below 1% from {onset:.0} nm), 1e18 vs 1e21: {:.3}%, 3e14 vs 1e15: {:.1}%",
            100.0 * high,
            100.0 * far,
            100.0 * low
        ),
    )
}

fn cli_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("run.toml");
    fs::write(
        &config,
        "[case]\nname = \"two-pole-a\"\nsize = 60\n[grid]\ncount = 10\n",
    )
    .unwrap();
    let run = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        fs::create_dir_all(dir).unwrap();
        let s = |p: &Path| p.to_str().unwrap().to_string();
        let steps: [Vec<String>; 3] = [
            vec!["gen".into(), "--config".into(), s(&config), "--seed".into(), "5".into(), "--out".into(), s(&dir.join("ds.csv"))],
            vec!["train".into(), "--dataset".into(), s(&dir.join("ds.csv")), "--seed".into(), "6".into(), "--epochs".into(), "300".into(), "--batch-size".into(), "16".into(), "--out".into(), s(&dir.join("model"))],
            vec!["eval".into(), "--model".into(), s(&dir.join("model")), "--dataset".into(), s(&dir.join("ds.csv")), "--out".into(), s(dir)],
        ];
        for args in steps {
            let st = Command::new(env!("CARGO_BIN_EXE_casimir"))
                .arg("-q")
                .args(&args)
                .output()
                .map_err(|e| e.to_string())?;
            if !st.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&st.stderr)));
            }
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        Ok(files)
    };
    match (run(&root.path().join("a")), run(&root.path().join("b"))) {
        (Ok(a), Ok(b)) => {
            let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
            let same = a == b && names.contains(&"model") && names.contains(&"report.csv");
            let model = Mlp::parse(std::str::from_utf8(&a.iter().find(|f| f.0 == "model").unwrap().1).unwrap(), "model");
            Outcome::hard(
                same && model.is_ok(),
                format!("{} files byte-identical across two runs: {}", a.len(), names.join(", ")),
            )
        }
        (Err(e), _) | (_, Err(e)) => Outcome::hard(false, e),
    }
}
