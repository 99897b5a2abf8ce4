//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero on any failure.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use robvar::bootstrap::BootstrapCovariance;
use robvar::clime::{clime, clime_column};
use robvar::experiments::{banded_design, run_experiment, ExperimentConfig};
use robvar::io::write_qq_csv;
use robvar::linalg::max_abs;
use robvar::loss::{hessian_block, objective, score, LossKind, RobustLossSpec, WeightConfig};
use robvar::model::{simulate, InnovationSpec};
use robvar::moments::weighted_covariance;
use robvar::pipeline::{fit, PipelineConfig};
use robvar::stats::{median, ols_slope};
use robvar::DMatrix;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, start: Instant, outcome: Outcome) -> bool {
    println!(
        "criterion {id} [{name}]: {} ({}; {:.1}s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        start.elapsed().as_secs_f64()
    );
    outcome.pass
}

fn criterion_calculus() -> Outcome {
    let mut r = rng(101);
    let (mut worst_score, mut worst_hess): (f64, f64) = (0.0, 0.0);
    for inst in 0..50 {
        let p = r.gen_range(2..=8);
        let sample = random_sample(61, p, 1000 + inst);
        let cfg = WeightConfig::from_quantile(&sample, 0.9).unwrap();
        let spec = RobustLossSpec::new(if inst % 2 == 0 { LossKind::SmoothedHuber1 } else { LossKind::SmoothedHuber2 });
        let beta = random_matrix(p, p, 0.3, &mut r);
        let s = score(&beta, &sample, &spec, &cfg).unwrap();
        let fd = fd_gradient(&beta, 1e-5, |b| objective(b, &sample, &spec, &cfg).unwrap());
        worst_score = worst_score.max(max_abs(&(&fd + &s)) / max_abs(&s));
        for k in 0..p {
            let h = hessian_block(&beta, &sample, &spec, &cfg, k).unwrap();
            let step = 1e-6;
            let mut fd_h = DMatrix::zeros(p, p);
            for j in 0..p {
                let mut up = beta.clone();
                let mut down = beta.clone();
                up[(k, j)] += step;
                down[(k, j)] -= step;
                let su = score(&up, &sample, &spec, &cfg).unwrap();
                let sd = score(&down, &sample, &spec, &cfg).unwrap();
                for i in 0..p {
                    // dS_k / d beta_kj = -H_k e_j
                    fd_h[(i, j)] = -(su[(k, i)] - sd[(k, i)]) / (2.0 * step);
                }
            }
            worst_hess = worst_hess.max(max_abs(&(&fd_h - &h)) / max_abs(&h));
        }
    }
    Outcome {
        pass: worst_score < 1e-6 && worst_hess < 1e-5,
        detail: format!("max rel err score {worst_score:.2e} < 1e-6, hessian {worst_hess:.2e} < 1e-5, 50 instances"),
    }
}

fn criterion_clime() -> Outcome {
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    let mut columns = 0;
    for inst in 0..50 {
        let p = if inst % 2 == 0 { 3 } else { 4 };
        let sigma = random_spd(p, &mut r);
        let lambda = r.gen_range(0.05..0.3);
        for j in 0..p {
            let (oracle, _) = clime_vertex_oracle(&sigma, j, lambda).expect("feasible: inverse is a solution");
            let theta = clime_column(&sigma, j, lambda, 1e-9).unwrap();
            let obj: f64 = theta.iter().map(|v| v.abs()).sum();
            worst = worst.max((obj - oracle).abs());
            columns += 1;
        }
    }
    let id = clime(&DMatrix::identity(4, 4), 0.1, 1e-9).unwrap();
    let exact = id.omega == DMatrix::identity(4, 4) * 0.9;
    Outcome {
        pass: worst < 1e-6 && exact,
        detail: format!("max |objective - vertex oracle| {worst:.2e} over {columns} columns; identity case exact: {exact}"),
    }
}

fn criterion_kronecker() -> Outcome {
    let mut worst_dense: f64 = 0.0;
    for (p, seed) in [(2usize, 5u64), (3, 6), (3, 7)] {
        let a = banded_design(p, 1, 0.5).unwrap();
        let sample = simulate(&a, &InnovationSpec::student_t(5.0), 400, None, seed).unwrap();
        let config = PipelineConfig::default();
        let out = fit(&sample, &config).unwrap();
        let spec = config.loss_spec();
        let n = sample.n;
        let res = &out.pilot.residuals;
        let t = out.weight.threshold;
        let mut s_x = DMatrix::zeros(p, p);
        for i in 0..n {
            let x: Vec<f64> = (0..p).map(|j| sample.series[(i, j)]).collect();
            let w = naive_weight(&x, t);
            for a in 0..p {
                for b in 0..p {
                    s_x[(a, b)] += x[a] * x[b] * w * w / n as f64;
                }
            }
        }
        let mu: Vec<f64> = (0..p).map(|k| (0..n).map(|i| spec.psi_prime(res[(i, k)])).sum::<f64>() / n as f64).collect();
        let omega = &out.precision.omega;
        let k_mat = omega * &s_x * omega.transpose();
        let mut dense = DMatrix::zeros(p * p, p * p);
        for j in 0..p {
            for k in 0..p {
                let cross = (0..n).map(|i| spec.psi(res[(i, j)]) * spec.psi(res[(i, k)])).sum::<f64>() / n as f64;
                let block = &k_mat * (cross / (mu[j] * mu[k]));
                dense.view_mut((j * p, k * p), (p, p)).copy_from(&block);
            }
        }
        worst_dense = worst_dense.max(max_abs(&(dense - out.covariance.dense())));
    }

    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]);
    let k = DMatrix::from_row_slice(2, 2, &[0.5, -0.2, -0.2, 0.4]);
    let cov = BootstrapCovariance::from_factors(m, k).unwrap();
    let target = cov.dense();
    let draws = 200_000;
    let mut r = rng(303);
    let mut acc = DMatrix::<f64>::zeros(4, 4);
    for _ in 0..draws {
        let z = cov.draw_matrix(&mut r);
        let v = [z[(0, 0)], z[(0, 1)], z[(1, 0)], z[(1, 1)]];
        for a in 0..4 {
            for b in 0..4 {
                acc[(a, b)] += v[a] * v[b];
            }
        }
    }
    let worst_sample = max_abs(&(acc / draws as f64 - target));
    Outcome {
        pass: worst_dense < 1e-12 && worst_sample < 5e-3,
        detail: format!("dense assembly vs M(x)K {worst_dense:.2e} < 1e-12; sampler covariance error {worst_sample:.2e} < 5e-3"),
    }
}

fn criterion_qq(dir: &Path) -> Outcome {
    let config = ExperimentConfig::default();
    let result = run_experiment(&config).unwrap();
    let path = dir.join(format!("qq_{}.csv", config.label()));
    write_qq_csv(&path, &result.qq().unwrap()).unwrap();
    let ks = result.ks_distance().unwrap();
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    Outcome {
        pass: ks <= 0.20 && lines == config.replications + 1,
        detail: format!(
            "{}: R = {}, B = {}, KS distance {ks:.3} <= 0.20, qq csv rows {}",
            config.label(),
            config.replications,
            config.bootstrap_draws,
            lines - 1
        ),
    }
}

fn criterion_size() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for mut config in ExperimentConfig::default_grid(ExperimentConfig::default().master_seed) {
        config.replications = 200;
        let result = run_experiment(&config).unwrap();
        let size = result.rejection_rate();
        pass &= (0.0..=0.15).contains(&size);
        parts.push(format!("{} {size:.3} (failed {})", config.label(), result.failures.len()));
    }
    Outcome {
        pass,
        detail: format!("rejection rate at alpha 0.05, R = 200, in [0, 0.15]: {}", parts.join(", ")),
    }
}

fn criterion_coverage() -> Outcome {
    let config = ExperimentConfig {
        replications: 200,
        alpha: 0.10,
        ..Default::default()
    };
    let result = run_experiment(&config).unwrap();
    let coverage = result.coverage();
    Outcome {
        pass: coverage >= 0.83,
        detail: format!("{} coverage at alpha 0.10 over R = 200: {coverage:.3} >= 0.83", config.label()),
    }
}

fn criterion_rate() -> Outcome {
    let a = banded_design(10, 2, 0.5).unwrap();
    let gauss = InnovationSpec::gaussian(1.0);
    let sizes = [250usize, 1000, 4000];
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    for seed in 0..20u64 {
        let reference = simulate(&a, &gauss, 100_000, None, 10_000 + seed).unwrap();
        let cfg = WeightConfig::from_quantile(&reference, 0.95).unwrap();
        let target = weighted_covariance(&reference, &cfg).unwrap();
        for (idx, &n) in sizes.iter().enumerate() {
            let sample = simulate(&a, &gauss, n, None, 100 * seed + idx as u64).unwrap();
            let est = weighted_covariance(&sample, &cfg).unwrap();
            errors[idx].push(max_abs(&(est - &target)));
        }
    }
    let x: Vec<f64> = sizes.iter().map(|n| (*n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| median(e).unwrap().ln()).collect();
    let slope = ols_slope(&x, &y).unwrap();
    Outcome {
        pass: (-0.65..=-0.35).contains(&slope),
        detail: format!(
            "log-log slope {slope:.3} in [-0.65, -0.35]; median errors {:?}",
            y.iter().map(|v| format!("{:.4}", v.exp())).collect::<Vec<_>>()
        ),
    }
}

fn run_cli(args: &[&str], out: &Path) -> std::process::Output {
    let o = Command::new(env!("CARGO_BIN_EXE_robvar"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "robvar {args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        let (fa, fb) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).map_err(|e| e.to_string())?);
        if name == "manifest.json" {
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_seconds");
                v
            };
            if strip(&fa) != strip(&fb) {
                return Err(format!("{} differs beyond wall time", a.join(name).display()));
            }
        } else if fa != fb {
            return Err(format!("{} differs", a.join(name).display()));
        }
    }
    Ok(names.len())
}

fn criterion_determinism(dir: &Path) -> Outcome {
    let sim = dir.join("sim.json");
    std::fs::write(
        &sim,
        r#"{"n": 120, "transition": {"type": "banded", "p": 4, "s": 1, "lambda": 0.5}, "innovation": {"family": "student_t", "df": 5}}"#,
    )
    .unwrap();
    let infer = dir.join("infer.json");
    std::fs::write(&infer, r#"{"bootstrap_draws": 300, "alpha": 0.1, "seed": 4}"#).unwrap();
    let exp = dir.join("exp.json");
    std::fs::write(
        &exp,
        r#"{"experiments": [
            {"design": {"type": "banded", "lambda": 0.5, "s": 1}, "n": 40, "p": 4, "innovation": {"family": "student_t", "df": 5}, "replications": 6, "bootstrap_draws": 100},
            {"design": {"type": "block_diagonal", "s": 2}, "n": 40, "p": 4, "innovation": {"family": "student_t", "df": 10}, "replications": 6, "bootstrap_draws": 100}
        ]}"#,
    )
    .unwrap();
    let qq = dir.join("qq.json");
    std::fs::write(&qq, r#"{"n": 30, "p": 5, "design": {"type": "banded", "lambda": 0.5, "s": 1}, "replications": 8, "bootstrap_draws": 100}"#).unwrap();

    let mut checked = 0;
    for (run, workers) in [("a", "1"), ("b", "3")] {
        let base = dir.join(run);
        let s = |x: &Path| x.to_str().unwrap().to_string();
        run_cli(&["--workers", workers, "--seed", "11", "simulate", "--config", &s(&sim)], &base.join("simulate"));
        let data = dir.join("a/simulate/sample.csv");
        let truth = dir.join("truth.csv");
        if run == "a" {
            let meta: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(dir.join("a/simulate/sample.json")).unwrap()).unwrap();
            let rows: Vec<String> = meta["transition"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap().to_string()).collect::<Vec<_>>().join(","))
                .collect();
            std::fs::write(&truth, format!("x1,x2,x3,x4\n{}\n", rows.join("\n"))).unwrap();
        }
        run_cli(&["--workers", workers, "fit", "--data", &s(&data), "--config", &s(&infer)], &base.join("fit"));
        run_cli(
            &["--workers", workers, "test", "--data", &s(&data), "--beta0", &s(&truth), "--config", &s(&infer)],
            &base.join("test"),
        );
        run_cli(&["--workers", workers, "--seed", "5", "experiment", "--config", &s(&exp)], &base.join("experiment"));
        run_cli(&["--workers", workers, "--seed", "5", "qq", "--config", &s(&qq)], &base.join("qq"));
    }
    for cmd in ["simulate", "fit", "test", "experiment", "qq"] {
        match compare_dirs(&dir.join("a").join(cmd), &dir.join("b").join(cmd)) {
            Ok(n) => checked += n,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e,
                }
            }
        }
    }
    Outcome {
        pass: true,
        detail: format!("5 commands run twice (1 and 3 workers): {checked} files byte-identical, manifests equal up to wall time"),
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut all = true;
    let t = Instant::now();
    all &= report(1, "calculus", t, criterion_calculus());
    let t = Instant::now();
    all &= report(2, "clime oracle", t, criterion_clime());
    let t = Instant::now();
    all &= report(3, "kronecker bootstrap", t, criterion_kronecker());
    let t = Instant::now();
    all &= report(4, "qq reproduction", t, criterion_qq(dir.path()));
    let t = Instant::now();
    all &= report(5, "test size", t, criterion_size());
    let t = Instant::now();
    all &= report(6, "ci coverage", t, criterion_coverage());
    let t = Instant::now();
    all &= report(7, "covariance rate", t, criterion_rate());
    let t = Instant::now();
    all &= report(8, "cli determinism", t, criterion_determinism(dir.path()));
    if !all {
        std::process::exit(1);
    }
}
