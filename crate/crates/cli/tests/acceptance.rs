//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every threshold below is fixed; none is tuned at run time.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use barlab::estimate::{s_matrix, theta_hat};
use barlab::limits::{lambda_fixed_point, order_one_closed_form, t_matrix, xi_vector, LimitSet};
use barlab::model::{simulate, BarModel, ContractionNorm, InitSpec, NoiseModel};
use barlab::seed::replicate_seed;
use barlab::tree::subtree_size;
use barlab::verify::{run_replicates, scale_admissible, Case, Plan, ScaleSpec, SlopeStatus};
use barlab::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_REL_TOL: f64 = 1e-9;
const RECOVERY_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-10;
const FIXED_POINT_RESIDUAL_TOL: f64 = 1e-12;
const LINEAR_ORACLE_TOL: f64 = 1e-10;
/// Pilot run (20 replicate seeds under master seed 4): the n = 14 median
/// relative deviation measured 0.96%, so 5% leaves room for other seeds.
const BRACKET_REL_TOL: f64 = 0.05;
const COV_REL_TOL: f64 = 0.20;
const ISOMETRY_TOL: f64 = 0.10;
const TAIL_WINDOW: (f64, f64) = (1e-3, 0.3);
const RATE_RATIO_TOL: f64 = 2.0;
const GAP_TOL: f64 = 1e-2;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn reference(rho: f64) -> (BarModel, NoiseModel) {
    (BarModel::new(1, vec![1.0, 0.5], vec![1.0, 0.5]).unwrap(), NoiseModel::gaussian(1.0, rho).unwrap())
}

fn model_of_order(p: usize) -> BarModel {
    match p {
        1 => BarModel::new(1, vec![0.8, 0.4], vec![-0.3, 0.6]).unwrap(),
        2 => {
            BarModel::build(2, vec![0.5, 0.4, 0.2], vec![-0.3, 0.3, -0.2], ContractionNorm::MeanSquare, false).unwrap()
        }
        3 => BarModel::build(
            3,
            vec![0.2, 0.3, 0.1, 0.15],
            vec![0.1, -0.2, 0.25, 0.1],
            ContractionNorm::MeanSquare,
            false,
        )
        .unwrap(),
        _ => unreachable!(),
    }
}

/// Dense Gaussian elimination with partial pivoting, independent of nalgebra.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        rhs.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

/// Stacks both daughter equations of every mother into one regression with
/// block design `[[Y, 0], [0, Y]]` and solves its normal equations.
fn stacked_oracle(x: impl Fn(u64) -> f64, p: usize, n: u32) -> Vec<f64> {
    let d = p + 1;
    let mut gram = vec![vec![0.0; 2 * d]; 2 * d];
    let mut rhs = vec![0.0; 2 * d];
    for k in (1u64 << (p - 1))..(1u64 << n) {
        let mut y = vec![1.0];
        y.extend((0..p).map(|i| x(k >> i)));
        for (offset, target) in [(0, x(2 * k)), (d, x(2 * k + 1))] {
            for i in 0..d {
                rhs[offset + i] += y[i] * target;
                for j in 0..d {
                    gram[offset + i][offset + j] += y[i] * y[j];
                }
            }
        }
    }
    gauss_solve(gram, rhs)
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    for p in 1..=3usize {
        let model = model_of_order(p);
        let noise = NoiseModel::gaussian(1.0, 0.3).unwrap();
        let n = p as u32 + 3;
        for seed in 0..20 {
            let tree = simulate(&model, Some(&noise), &InitSpec::Gaussian { std: 1.0 }, n, seed).unwrap();
            let fit = theta_hat(&tree, n).unwrap();
            let oracle = DVector::from_vec(stacked_oracle(|k| tree.x(k), p, n));
            worst = worst.max((&fit.theta - &oracle).norm() / oracle.norm());
        }
    }
    outcome(worst < ORACLE_REL_TOL, format!("max relative error {worst:.2e} over p = 1..3, 20 seeds each"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for p in 1..=3usize {
        let model = model_of_order(p);
        for seed in 0..5 {
            let tree = simulate(&model, None, &InitSpec::Gaussian { std: 1.0 }, p as u32 + 4, seed).unwrap();
            let fit = theta_hat(&tree, tree.n()).unwrap();
            worst = worst.max((&fit.theta - model.theta()).amax());
        }
    }
    // fixed point 1 = 0.5 + 0.5 * 1 keeps every regressor at (1, 1)
    let flat = BarModel::new(1, vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
    let tree = simulate(&flat, None, &InitSpec::Constant { value: 1.0 }, 6, 0).unwrap();
    let singular = matches!(theta_hat(&tree, 6), Err(Error::SingularDesign { .. }));
    outcome(
        worst < RECOVERY_TOL && singular,
        format!("max |theta_hat - theta| = {worst:.2e}; constant regressors -> SingularDesign: {singular}"),
    )
}

fn vec_linear_oracle(model: &BarModel, t: &DMatrix<f64>) -> DMatrix<f64> {
    let p = model.p();
    let (a, b) = (model.companion_a(), model.companion_b());
    let n = p * p;
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..p {
        for j in 0..p {
            let row = i + p * j;
            m[row][row] += 1.0;
            for k in 0..p {
                for l in 0..p {
                    m[row][k + p * l] -= 0.5 * (a[(i, k)] * a[(j, l)] + b[(i, k)] * b[(j, l)]);
                }
            }
        }
    }
    let rhs: Vec<f64> = (0..n).map(|idx| t[(idx % p, idx / p)]).collect();
    DMatrix::from_column_slice(p, p, &gauss_solve(m, rhs))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut cf_err, mut residual, mut lin_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let model = BarModel::new(
            1,
            vec![rng.random_range(-3.0..3.0), rng.random_range(-0.95..0.95)],
            vec![rng.random_range(-3.0..3.0), rng.random_range(-0.95..0.95)],
        )
        .unwrap();
        let s2 = rng.random_range(0.1..3.0);
        let (xi_cf, lam_cf) = order_one_closed_form(&model, s2).unwrap();
        let xi = xi_vector(&model).unwrap();
        let (lam, rep) = lambda_fixed_point(&model, &t_matrix(&model, s2, &xi)).unwrap();
        cf_err =
            cf_err.max(((lam[(0, 0)] - lam_cf) / lam_cf).abs()).max(((xi[0] - xi_cf) / xi_cf.abs().max(1.0)).abs());
        residual = residual.max(rep.residual);
    }
    let mut models = 0;
    while models < 20 {
        let a: Vec<f64> = (0..3).map(|i| rng.random_range(-1.0..1.0) * if i == 0 { 2.0 } else { 0.45 }).collect();
        let b: Vec<f64> = (0..3).map(|i| rng.random_range(-1.0..1.0) * if i == 0 { 2.0 } else { 0.45 }).collect();
        let Ok(model) = BarModel::build(2, a, b, ContractionNorm::MeanSquare, false) else { continue };
        models += 1;
        let t = t_matrix(&model, 1.0, &xi_vector(&model).unwrap());
        let (lam, rep) = lambda_fixed_point(&model, &t).unwrap();
        let oracle = vec_linear_oracle(&model, &t);
        lin_err = lin_err.max((&lam - &oracle).amax() / oracle.amax().max(1.0));
        residual = residual.max(rep.residual);
    }
    outcome(
        cf_err < CLOSED_FORM_TOL && residual < FIXED_POINT_RESIDUAL_TOL && lin_err < LINEAR_ORACLE_TOL,
        format!("closed form {cf_err:.1e}, residual {residual:.1e}, p = 2 linear system {lin_err:.1e}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn criterion_4() -> Outcome {
    let (model, noise) = reference(0.3);
    let ls = LimitSet::compute(&model, &noise).unwrap();
    let l_norm = ls.l.norm();
    let trees: Vec<_> =
        (0..20).map(|r| simulate(&model, Some(&noise), &InitSpec::Zero, 14, replicate_seed(4, r)).unwrap()).collect();
    let medians: Vec<f64> = (6..=14)
        .map(|n| {
            median(trees.iter().map(|t| (s_matrix(t, n).unwrap() / subtree_size(n) as f64 - &ls.l).norm()).collect())
        })
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let rel = medians.last().unwrap() / l_norm;
    outcome(
        decreasing && rel < BRACKET_REL_TOL,
        format!("strictly decreasing: {decreasing}; n = 14 median relative error {:.2}%", 100.0 * rel),
    )
}

fn plan(n_min: u32, n_max: u32, replicates: usize, seed: u64) -> Plan {
    let mut p = Plan::new(n_min, n_max, replicates, seed);
    p.cov_tol = COV_REL_TOL;
    p.isometry_tol = ISOMETRY_TOL;
    p.slope_window = TAIL_WINDOW;
    p.rate_ratio_tol = RATE_RATIO_TOL;
    p
}

fn criterion_5() -> Outcome {
    let (model, noise) = reference(0.3);
    let rep = run_replicates(&model, &noise, &InitSpec::Zero, &plan(12, 12, 500, 5), 4).unwrap();
    let cov = rep.covariance.unwrap();
    outcome(
        cov.rel_err < COV_REL_TOL && rep.failed.is_empty(),
        format!("relative Frobenius error {:.4} over {} replicates", cov.rel_err, cov.replicates),
    )
}

fn criterion_6() -> Outcome {
    let (model, noise) = reference(0.3);
    let rep = run_replicates(&model, &noise, &InitSpec::Zero, &plan(8, 8, 2000, 6), 4).unwrap();
    let iso = rep.isometry.unwrap();
    outcome(iso.max_rel < ISOMETRY_TOL, format!("max entrywise relative gap {:.4}", iso.max_rel))
}

fn criterion_7() -> Outcome {
    let (model, noise) = reference(0.3);
    let mut pl = plan(6, 11, 10_000, 7);
    pl.slope_generation = 7;
    let rep = run_replicates(&model, &noise, &InitSpec::Zero, &pl, 4).unwrap();
    let Some(delta) = rep.slope_delta else {
        return outcome(false, "no delta with P_hat(7) inside the window");
    };
    let p7 = rep.tails.iter().find(|t| t.n == 7).unwrap().rows.iter().find(|r| r.delta == delta).unwrap().p_hat;
    let slope = rep.slope.unwrap();
    let env = rep.envelope.unwrap();
    outcome(
        slope.status == SlopeStatus::Confirmed && env.dominates,
        format!(
            "delta {delta:.4} (P_hat(7) = {p7:.4}), slope {:.4} with 95% lower bound {:.4} over n = {:?}; envelope margin {:.1e}",
            slope.slope.unwrap_or(f64::NAN),
            slope.lower95.unwrap_or(f64::NAN),
            slope.generations_used,
            env.worst_margin
        ),
    )
}

fn criterion_8() -> Outcome {
    let (model, noise) = reference(0.0);
    let mut pl = plan(10, 10, 10_000, 8);
    pl.alpha = 0.25;
    let rep = run_replicates(&model, &noise, &InitSpec::Zero, &pl, 4).unwrap();
    let curve = rep.rates_sigma2.unwrap();
    let Some(fit) = curve.fit else {
        return outcome(false, "every grid point censored");
    };
    outcome(
        fit.nondecreasing && fit.max_ratio <= RATE_RATIO_TOL,
        format!(
            "c = {:.4} vs 1/(tau4 - 2 sigma^4 + nu2) = {:.4} and 1/(2 tau4 - 4 sigma^4 + 2 nu2) = {:.4}; max ratio {:.3} over {} points",
            fit.c,
            curve.c_theory,
            curve.c_alternative.unwrap(),
            fit.max_ratio,
            fit.points
        ),
    )
}

fn criterion_9() -> Outcome {
    let (model, noise) = reference(0.3);
    let rep = run_replicates(&model, &noise, &InitSpec::Zero, &plan(8, 14, 50, 9), 4).unwrap();
    let s2: Vec<f64> = rep.gaps.iter().map(|g| g.sigma2_median).collect();
    let rho: Vec<f64> = rep.gaps.iter().map(|g| g.rho_median).collect();
    let down = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let (last_s2, last_rho) = (*s2.last().unwrap(), *rho.last().unwrap());
    outcome(
        down(&s2) && down(&rho) && last_s2 < GAP_TOL && last_rho < GAP_TOL,
        format!(
            "sigma2 decreasing {}, n = 14 median {last_s2:.2e}; rho decreasing {}, n = 14 median {last_rho:.2e}",
            down(&s2),
            down(&rho)
        ),
    )
}

#[allow(clippy::approx_constant)]
fn criterion_10() -> Outcome {
    // thresholds: case 1 -> 1/2 if beta <= 1/2 else -log2(beta)/2
    //             case 2 -> 1/2 if beta^2 <= 1/2 else -log2(beta)
    // -log2(0.8) = 0.32193, so case 1 allows alpha < 0.16096 at beta = 0.8;
    // beta = 0.7071 sits on sqrt(2)/2 (case 1 threshold 1/4, case 2 critical)
    let expected = [
        (Case::One, 0.4, [true, true, true]),
        (Case::One, 0.7071, [true, false, false]),
        (Case::One, 0.8, [true, false, false]),
        (Case::Two, 0.4, [true, true, true]),
        (Case::Two, 0.7071, [true, true, true]),
        (Case::Two, 0.8, [true, true, false]),
    ];
    let alphas = [0.1, 0.25, 0.4];
    let mut mismatches = Vec::new();
    for (case, beta, want) in expected {
        for (alpha, want) in alphas.iter().zip(want) {
            let got = scale_admissible(&ScaleSpec::new(*alpha, case, beta).unwrap()).pass;
            if got != want {
                mismatches.push(format!("case {} beta {beta} alpha {alpha}", case.label()));
            }
        }
    }
    outcome(mismatches.is_empty(), format!("18 cells, mismatches: {mismatches:?}"))
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.toml");
    std::fs::write(
        &cfg,
        r#"[model]
p = 1
a = [1.0, 0.5]
b = [1.0, 0.5]

[noise]
family = "gaussian"
sigma2 = 1.0
rho = 0.3

[experiment]
n = 9
n_min = 6
replicates = 300
master_seed = 11
"#,
    )
    .unwrap();
    let run = |workers: &str, out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_barlab"))
            .args(["montecarlo", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(out)
            .output()
            .unwrap()
            .status
            .success()
    };
    let outs: Vec<_> = ["w1a", "w1b", "w8"].iter().map(|d| dir.path().join(d)).collect();
    let ok = run("1", &outs[0]) && run("1", &outs[1]) && run("8", &outs[2]);
    if !ok {
        return outcome(false, "montecarlo command failed");
    }
    let files = ["report.json", "tails.csv", "rates.csv", "rates_rho.csv", "cov.csv"];
    let mut differing = Vec::new();
    for f in files {
        let base = std::fs::read(outs[0].join(f)).unwrap();
        for o in &outs[1..] {
            if std::fs::read(o.join(f)).unwrap() != base {
                differing.push(format!("{}/{f}", o.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    outcome(differing.is_empty(), format!("{} files x 3 runs, differing: {differing:?}", files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("oracle equivalence", criterion_1, Duration::from_secs(5)),
        ("zero-noise recovery", criterion_2, Duration::from_secs(1)),
        ("limit cross-check", criterion_3, Duration::from_secs(2)),
        ("bracket convergence trend", criterion_4, Duration::from_secs(120)),
        ("CLT covariance", criterion_5, Duration::from_secs(180)),
        ("martingale isometry", criterion_6, Duration::from_secs(60)),
        ("deviation envelope regime", criterion_7, Duration::from_secs(300)),
        ("MDP rate trend", criterion_8, Duration::from_secs(300)),
        ("estimator gap decay", criterion_9, Duration::from_secs(120)),
        ("scale checker", criterion_10, Duration::from_secs(1)),
        ("determinism", criterion_11, Duration::from_secs(300)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let passed = out.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] criterion {id:>2} {name}: {} ({:.2}s, budget {}s{})",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
