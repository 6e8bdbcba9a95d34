//! Named property checks behind `esp-design verify`.
//!
//! Each check stresses one published identity or invariant against an
//! independent oracle and reports its worst residual. Checks are grouped by
//! dotted prefix (`esp.`, `solver.`, ...) so `--only` can run a subset.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use esp_design::data::{generate, load_csv, save_csv, SyntheticSpec};
use esp_design::discretize::{greedy_removal, sample_rounding};
use esp_design::dual::{certificate, solve_a_of_h};
use esp_design::esp::{
    esp_gradient, esp_matrix, esp_of_inverse, esp_vector, geodesic_point, SpectralDecomp,
};
use esp_design::objective::{f_relaxed, grad_relaxed};
use esp_design::oracles::{
    cauchy_binet_check, esp_bruteforce, esp_minor_sum, exhaustive_optimum,
    volume_sampling_expectation, EnumerationBudget,
};
use esp_design::solver::{project_knapsack, solve_relaxation, support, DEFAULT_SUPPORT_EPS};
use esp_design::{DesignMatrix, ObjectiveOrder, PdMatrix, SolverConfig, Subset, Weights};

type Check = fn(bool) -> Result<f64, String>;

/// The check `--inject-perturbation` corrupts, proving failures surface.
const PERTURBED: &str = "esp.vector-bruteforce";

const CHECKS: &[(&str, Check)] = &[
    ("esp.vector-bruteforce", check_vector_bruteforce),
    ("esp.matrix-minor-sum", check_matrix_minor_sum),
    ("esp.inverse-identity", check_inverse_identity),
    ("esp.gradient-fd", check_esp_gradient_fd),
    ("esp.geodesic-convexity", check_geodesic_convexity),
    ("objective.gradient-fd", check_objective_gradient_fd),
    ("objective.segment-convexity", check_segment_convexity),
    ("solver.projection-kkt", check_projection_kkt),
    ("solver.relaxation-invariants", check_relaxation_invariants),
    ("discretize.greedy-bound", check_greedy_bound),
    ("discretize.sample-size", check_sample_size),
    ("oracles.cauchy-binet", check_cauchy_binet),
    ("oracles.volume-sampling", check_volume_sampling),
    ("oracles.exhaustive-gap", check_exhaustive_gap),
    ("dual.closed-forms", check_dual_closed_forms),
    ("dual.trace-identity", check_dual_trace_identity),
    ("data.csv-roundtrip", check_csv_roundtrip),
];

/// Runs every check whose name starts with `only` and returns the process
/// exit code: 0 all pass, 1 any failure, 2 when the prefix matches nothing.
pub fn run(only: Option<&str>, perturb: bool) -> u8 {
    let mut ran = 0usize;
    let mut failed = 0usize;
    for &(name, check) in CHECKS {
        if only.is_some_and(|prefix| !name.starts_with(prefix)) {
            continue;
        }
        ran += 1;
        match check(perturb && name == PERTURBED) {
            Ok(residual) => println!("{name}: PASS (max residual {residual:.3e})"),
            Err(msg) => {
                println!("{name}: FAIL - {msg}");
                failed += 1;
            }
        }
    }
    if ran == 0 {
        eprintln!("error: no verification check matches prefix {:?}", only.unwrap_or(""));
        return 2;
    }
    println!("{} checks: {} passed, {failed} failed", ran, ran - failed);
    u8::from(failed > 0)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_symmetric(rng: &mut ChaCha8Rng, m: usize, span: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-span..span));
    (&a + a.transpose()) * 0.5
}

fn random_pd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.3
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<DesignMatrix, String> {
    DesignMatrix::new(DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)))
        .map_err(|e| e.to_string())
}

fn interior_weights(rng: &mut ChaCha8Rng, n: usize) -> Result<Weights, String> {
    Weights::new(DVector::from_fn(n, |_, _| rng.random_range(0.2..0.8)), n)
        .map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn check_vector_bruteforce(perturb: bool) -> Result<f64, String> {
    let mut rng = rng(1);
    let mut worst = 0.0f64;
    for t in 0..60 {
        let m = 1 + t % 8;
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        for l in 0..=m + 1 {
            let got = esp_vector(&v, l).map_err(fail)?.value();
            let mut want = esp_bruteforce(&v, l).map_err(fail)?;
            if perturb {
                want += 1e-3 * (1.0 + want.abs());
            }
            let rel = (got - want).abs() / got.abs().max(want.abs()).max(1.0);
            worst = worst.max(rel);
            if rel > 1e-8 {
                return Err(format!(
                    "order {l} of {v:?}: got {got}, oracle {want} (rel {rel:.3e})"
                ));
            }
        }
    }
    Ok(worst)
}

fn check_matrix_minor_sum(_: bool) -> Result<f64, String> {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    for t in 0..30 {
        let m = 2 + t % 5;
        let a = random_symmetric(&mut rng, m, 2.0);
        for l in 1..=m {
            let got = esp_matrix(&a, l).map_err(fail)?.value();
            let want = esp_minor_sum(&a, l).map_err(fail)?;
            let rel = (got - want).abs() / got.abs().max(want.abs()).max(1.0);
            worst = worst.max(rel);
            if rel > 1e-7 {
                return Err(format!(
                    "order {l}, m = {m}: got {got}, minor sum {want} (rel {rel:.3e})"
                ));
            }
        }
    }
    Ok(worst)
}

fn check_inverse_identity(_: bool) -> Result<f64, String> {
    let mut rng = rng(3);
    let mut worst = 0.0f64;
    for t in 0..30 {
        let m = 2 + t % 6;
        let a = random_pd(&mut rng, m);
        let inv = a.clone().try_inverse().ok_or("inverse failed")?;
        let inv = (&inv + inv.transpose()) * 0.5;
        let pd = PdMatrix::new(a).map_err(fail)?;
        for l in 1..=m {
            let got = esp_of_inverse(&pd, l).map_err(fail)?.log_value();
            let want = esp_matrix(&inv, l).map_err(fail)?.log_value();
            let diff = (got - want).abs();
            worst = worst.max(diff);
            if diff > 1e-8 {
                return Err(format!(
                    "order {l}, m = {m}: log values {got} vs {want} via explicit inverse"
                ));
            }
        }
    }
    Ok(worst)
}

fn check_esp_gradient_fd(_: bool) -> Result<f64, String> {
    let mut rng = rng(4);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let m = 3 + t % 4;
        let a = random_symmetric(&mut rng, m, 2.0);
        let scale_a = a.amax();
        for l in 1..=m {
            let grad = esp_gradient(&a, l).map_err(fail)?;
            for _ in 0..3 {
                let d = random_symmetric(&mut rng, m, 1.0);
                let d = &d / d.amax();
                let h = 1e-4 * (1.0 + scale_a);
                let plus = esp_matrix(&(&a + &d * h), l).map_err(fail)?.value();
                let minus = esp_matrix(&(&a - &d * h), l).map_err(fail)?.value();
                let fd = (plus - minus) / (2.0 * h);
                let analytic = grad.component_mul(&d).sum();
                let denom = analytic.abs().max(fd.abs()).max(1e-8 * (plus.abs() + 1.0));
                let rel = (analytic - fd).abs() / denom;
                worst = worst.max(rel);
                if rel > 1e-5 {
                    return Err(format!(
                        "order {l}, m = {m}: directional derivative {analytic} vs {fd} (rel {rel:.3e})"
                    ));
                }
            }
        }
    }
    Ok(worst)
}

fn check_geodesic_convexity(_: bool) -> Result<f64, String> {
    let mut rng = rng(5);
    let mut worst = 0.0f64;
    for t in 0..60 {
        let m = 2 + t % 4;
        let p = PdMatrix::new(random_pd(&mut rng, m)).map_err(fail)?;
        let q = PdMatrix::new(random_pd(&mut rng, m)).map_err(fail)?;
        let t_mid = if t % 2 == 0 { 0.5 } else { rng.random_range(0.05..0.95) };
        let mid = geodesic_point(&p, &q, t_mid).map_err(fail)?;
        for l in 1..=m {
            let lhs = esp_matrix(mid.matrix(), l).map_err(fail)?.log_value();
            let fp = esp_matrix(p.matrix(), l).map_err(fail)?.log_value();
            let fq = esp_matrix(q.matrix(), l).map_err(fail)?.log_value();
            let rhs = (1.0 - t_mid) * fp + t_mid * fq;
            let slack = lhs - rhs;
            worst = worst.max(slack);
            if slack > 1e-9 {
                return Err(format!(
                    "order {l}, m = {m}, t = {t_mid}: midpoint log value exceeds chord by {slack:.3e}"
                ));
            }
        }
    }
    Ok(worst.max(0.0))
}

fn check_objective_gradient_fd(_: bool) -> Result<f64, String> {
    let mut rng = rng(6);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let n = 8 + t % 7;
        let m = 2 + t % 3;
        let x = random_design(&mut rng, n, m)?;
        let order = ObjectiveOrder::new(1 + t % m, m).map_err(fail)?;
        let z = interior_weights(&mut rng, n)?;
        let g = grad_relaxed(&x, &z, order).map_err(fail)?;
        let scale = g.amax().max(1.0);
        for _ in 0..3 {
            let i = rng.random_range(0..n);
            let h = 1e-5;
            let mut zp = z.vector().clone();
            zp[i] += h;
            let mut zm = z.vector().clone();
            zm[i] -= h;
            let fp = f_relaxed(&x, &Weights::new(zp, n).map_err(fail)?, order).map_err(fail)?;
            let fm = f_relaxed(&x, &Weights::new(zm, n).map_err(fail)?, order).map_err(fail)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / scale;
            worst = worst.max(rel);
            if rel > 1e-4 {
                return Err(format!(
                    "coordinate {i}: analytic {} vs finite difference {fd} (rel {rel:.3e})",
                    g[i]
                ));
            }
        }
    }
    Ok(worst)
}

fn check_segment_convexity(_: bool) -> Result<f64, String> {
    let mut rng = rng(7);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let n = 8 + t % 7;
        let m = 2 + t % 3;
        let x = random_design(&mut rng, n, m)?;
        let order = ObjectiveOrder::new(1 + t % m, m).map_err(fail)?;
        let z0 = interior_weights(&mut rng, n)?;
        let z1 = interior_weights(&mut rng, n)?;
        let tau: f64 = if t % 2 == 0 { 0.5 } else { rng.random_range(0.05..0.95) };
        let zt = Weights::new(z0.vector() * (1.0 - tau) + z1.vector() * tau, n).map_err(fail)?;
        let f0 = f_relaxed(&x, &z0, order).map_err(fail)?;
        let f1 = f_relaxed(&x, &z1, order).map_err(fail)?;
        let ft = f_relaxed(&x, &zt, order).map_err(fail)?;
        let slack = ft - ((1.0 - tau) * f0 + tau * f1);
        worst = worst.max(slack);
        if slack > 1e-9 {
            return Err(format!(
                "segment point exceeds chord by {slack:.3e} (n = {n}, m = {m})"
            ));
        }
    }
    Ok(worst.max(0.0))
}

fn check_projection_kkt(_: bool) -> Result<f64, String> {
    let mut rng = rng(8);
    let mut worst = 0.0f64;
    for t in 0..100usize {
        let n = 3 + t % 10;
        let k = 1 + t % (n - 1);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.5..2.5));
        let z = project_knapsack(&y, k).map_err(fail)?;
        for i in 0..n {
            if !(-1e-12..=1.0 + 1e-12).contains(&z[i]) {
                return Err(format!("coordinate {i} = {} outside [0, 1]", z[i]));
            }
        }
        let mass = z.sum();
        if mass > k as f64 + 1e-9 {
            return Err(format!("mass {mass} exceeds budget {k}"));
        }
        let again = project_knapsack(&z, k).map_err(fail)?;
        let drift = (&again - &z).amax();
        worst = worst.max(drift);
        if drift > 1e-9 {
            return Err(format!("projection is not idempotent (drift {drift:.3e})"));
        }
        // KKT: inactive mass constraint means plain clamping; otherwise a
        // single multiplier theta explains every coordinate.
        if mass < k as f64 - 1e-9 {
            let clamp = y.map(|v| v.clamp(0.0, 1.0));
            let diff = (&clamp - &z).amax();
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!("slack mass but not a clamp (diff {diff:.3e})"));
            }
        } else {
            let interior: Vec<f64> = (0..n)
                .filter(|&i| z[i] > 1e-9 && z[i] < 1.0 - 1e-9)
                .map(|i| y[i] - z[i])
                .collect();
            if let (Some(lo), Some(hi)) = (
                interior.iter().cloned().reduce(f64::min),
                interior.iter().cloned().reduce(f64::max),
            ) {
                let spread = hi - lo;
                worst = worst.max(spread);
                if spread > 1e-8 {
                    return Err(format!("multiplier spread {spread:.3e} across interior coordinates"));
                }
                let theta = 0.5 * (lo + hi);
                for i in 0..n {
                    let viol = if z[i] <= 1e-9 {
                        y[i] - theta
                    } else if z[i] >= 1.0 - 1e-9 {
                        theta - (y[i] - 1.0)
                    } else {
                        0.0
                    };
                    worst = worst.max(viol);
                    if viol > 1e-8 {
                        return Err(format!("KKT sign condition violated at {i} by {viol:.3e}"));
                    }
                }
            }
        }
    }
    Ok(worst.max(0.0))
}

fn check_relaxation_invariants(_: bool) -> Result<f64, String> {
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for (i, l) in [1usize, 3, 5].into_iter().enumerate() {
        let spec = SyntheticSpec::skewed(40, 5, 1.0, 90 + i as u64).map_err(fail)?;
        let data = generate(&spec).map_err(fail)?;
        let x = data.x();
        let order = ObjectiveOrder::new(l, 5).map_err(fail)?;
        let report = solve_relaxation(x, 10, order, &cfg).map_err(fail)?;
        for w in report.objective_trace.windows(2) {
            let rise = w[1] - w[0];
            worst = worst.max(rise);
            if rise > 1e-12 {
                return Err(format!("objective trace rises by {rise:.3e} at order {l}"));
            }
        }
        let mass_err = (report.final_weights.mass() - 10.0).abs();
        worst = worst.max(mass_err);
        if mass_err > 1e-8 {
            return Err(format!("final mass off budget by {mass_err:.3e} at order {l}"));
        }
        let supp = support(&report.final_weights, DEFAULT_SUPPORT_EPS);
        if supp > 10 + 5 * 6 / 2 {
            return Err(format!("support {supp} exceeds k + m(m+1)/2 at order {l}"));
        }
    }
    Ok(worst.max(0.0))
}

fn check_greedy_bound(_: bool) -> Result<f64, String> {
    let mut rng = rng(10);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let n = 12 + t % 9;
        let m = 2 + t % 3;
        let x = random_design(&mut rng, n, m)?;
        let l = 1 + t % m;
        let order = ObjectiveOrder::new(l, m).map_err(fail)?;
        let k = m + t % (n - m);
        let full = Subset::full(n).map_err(fail)?;
        let f_full = esp_design::objective::f_discrete(&x, &full, order).map_err(fail)?;
        let s = greedy_removal(&x, k, order, &full).map_err(fail)?;
        let f_s = esp_design::objective::f_discrete(&x, &s, order).map_err(fail)?;
        let bound: f64 = (1..=l)
            .map(|j| (((n - m + j) as f64) / ((k - m + j) as f64)).ln())
            .sum::<f64>()
            / l as f64;
        let slack = f_s - (f_full + bound);
        worst = worst.max(slack);
        if slack > 1e-9 {
            return Err(format!(
                "greedy exceeds the removal bound by {slack:.3e} (n = {n}, m = {m}, k = {k}, l = {l})"
            ));
        }
    }
    Ok(worst.max(0.0))
}

fn check_sample_size(_: bool) -> Result<f64, String> {
    let mut rng = rng(11);
    let x = random_design(&mut rng, 15, 3)?;
    let order = ObjectiveOrder::new(2, 3).map_err(fail)?;
    let cfg = SolverConfig::default();
    let report = solve_relaxation(&x, 5, order, &cfg).map_err(fail)?;
    for seed in 0..20 {
        let outcome = sample_rounding(&report.final_weights, 5, seed).map_err(fail)?;
        let s = outcome.subset;
        if s.len() != 5 {
            return Err(format!("draw {seed} produced {} rows, expected 5", s.len()));
        }
        let idx = s.indices();
        for w in idx.windows(2) {
            if w[0] >= w[1] {
                return Err(format!("draw {seed} indices not strictly increasing: {idx:?}"));
            }
        }
        if *idx.last().unwrap() >= 15 {
            return Err(format!("draw {seed} index out of range: {idx:?}"));
        }
    }
    Ok(0.0)
}

fn check_cauchy_binet(_: bool) -> Result<f64, String> {
    let mut rng = rng(12);
    for t in 0..20 {
        let m = 2 + t % 3;
        let n = m + 2 + t % 6;
        let x = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        if !cauchy_binet_check(&x).map_err(fail)? {
            return Err(format!("identity fails for a {n} x {m} matrix (case {t})"));
        }
    }
    Ok(0.0)
}

fn check_volume_sampling(_: bool) -> Result<f64, String> {
    let mut rng = rng(13);
    let budget = EnumerationBudget {
        max_n: 12,
        max_m: 4,
        max_subsets: 1_000_000,
    };
    let mut worst = 0.0f64;
    for t in 0..5 {
        let m = 2 + t % 2;
        let n = 8 + t % 3;
        let x = random_design(&mut rng, n, m)?;
        let k = m + 1 + t % 2;
        let order = ObjectiveOrder::new(1 + t % m, m).map_err(fail)?;
        let (lhs, rhs) = volume_sampling_expectation(&x, k, order, &budget).map_err(fail)?;
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-6 {
            return Err(format!(
                "expectation {lhs} vs closed form {rhs} (rel {rel:.3e})"
            ));
        }
    }
    Ok(worst)
}

fn check_exhaustive_gap(_: bool) -> Result<f64, String> {
    let mut rng = rng(14);
    let budget = EnumerationBudget {
        max_n: 12,
        max_m: 4,
        max_subsets: 1_000_000,
    };
    let mut worst = 0.0f64;
    for t in 0..5 {
        let n = 10 + t % 3;
        let m = 2 + t % 2;
        let x = random_design(&mut rng, n, m)?;
        let l = 1 + t % m;
        let order = ObjectiveOrder::new(l, m).map_err(fail)?;
        let k = m + 1;
        let star = exhaustive_optimum(&x, k, order, &budget).map_err(fail)?;
        let f_star = esp_design::objective::f_discrete(&x, &star, order).map_err(fail)?;
        let full = Subset::full(n).map_err(fail)?;
        let s = greedy_removal(&x, k, order, &full).map_err(fail)?;
        let f_s = esp_design::objective::f_discrete(&x, &s, order).map_err(fail)?;
        if f_s < f_star - 1e-9 {
            return Err(format!(
                "greedy beats the exhaustive optimum by {:.3e}",
                f_star - f_s
            ));
        }
        let bound: f64 = (1..=l)
            .map(|j| (((n - m + j) as f64) / ((k - m + j) as f64)).ln())
            .sum::<f64>()
            / l as f64;
        let slack = f_s - (f_star + bound);
        worst = worst.max(slack).max(0.0);
        if slack > 1e-9 {
            return Err(format!("greedy gap exceeds the removal bound by {slack:.3e}"));
        }
    }
    Ok(worst)
}

fn check_dual_closed_forms(_: bool) -> Result<f64, String> {
    let mut rng = rng(15);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let m = 2 + t % 5;
        let h = random_pd(&mut rng, m);
        let scale = h.amax();
        let top = solve_a_of_h(&h, m).map_err(fail)?;
        let diff_top = (top.matrix() - &h).amax() / scale;
        worst = worst.max(diff_top);
        if diff_top > 1e-8 {
            return Err(format!("a(H) at order m differs from H by {diff_top:.3e}"));
        }
        let decomp = SpectralDecomp::new(&h).map_err(fail)?;
        let sqrt_h = decomp.apply_spectral(f64::sqrt);
        let want = &sqrt_h * sqrt_h.trace();
        let one = solve_a_of_h(&h, 1).map_err(fail)?;
        let diff_one = (one.matrix() - &want).amax() / want.amax();
        worst = worst.max(diff_one);
        if diff_one > 1e-8 {
            return Err(format!(
                "a(H) at order 1 differs from tr(H^1/2) H^1/2 by {diff_one:.3e}"
            ));
        }
    }
    Ok(worst)
}

fn check_dual_trace_identity(_: bool) -> Result<f64, String> {
    let mut rng = rng(16);
    let mut worst = 0.0f64;
    for t in 0..10 {
        let m = 2 + t % 4;
        let h = random_pd(&mut rng, m);
        for l in 1..=m {
            let cert = certificate(&h, l).map_err(fail)?;
            worst = worst.max(cert.stationarity_residual).max(cert.trace_residual);
            if cert.stationarity_residual > 1e-8 || cert.trace_residual > 1e-8 {
                return Err(format!(
                    "order {l}, m = {m}: stationarity {:.3e}, trace {:.3e}",
                    cert.stationarity_residual, cert.trace_residual
                ));
            }
        }
    }
    Ok(worst)
}

fn check_csv_roundtrip(_: bool) -> Result<f64, String> {
    let spec = SyntheticSpec::sparse_precision(50, 6, 0.5, 1234).map_err(fail)?;
    let a = generate(&spec).map_err(fail)?;
    let b = generate(&spec).map_err(fail)?;
    if a.x().matrix() != b.x().matrix() {
        return Err("same spec and seed produced different matrices".into());
    }
    let path = std::env::temp_dir().join(format!("esp-design-verify-{}.csv", std::process::id()));
    let result = (|| {
        save_csv(&a, &path).map_err(fail)?;
        let back = load_csv(&path, None, false).map_err(fail)?;
        if back.x().matrix() != a.x().matrix() {
            return Err("reloaded matrix differs from the saved one".to_string());
        }
        match (a.y(), back.y()) {
            (Some(ya), Some(yb)) if ya == yb => Ok(0.0),
            (None, None) => Ok(0.0),
            _ => Err("reloaded response differs from the saved one".to_string()),
        }
    })();
    let _ = std::fs::remove_file(&path);
    result
}
