//! Projected gradient descent for the continuous relaxation over the
//! knapsack polytope `{z : 0 <= z_i <= 1, 1'z = k}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::objective::{relaxed_value, relaxed_value_and_grad, DesignMatrix, ObjectiveOrder, Weights};

/// Entries above this count toward the support of a solution.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-6;

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK_FACTOR: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;
const KKT_TOL: f64 = 1e-10;

/// Tuning knobs for [`solve_relaxation`].
///
/// `seed` is part of the determinism contract (identical configs reproduce
/// identical runs); the projected-gradient path itself draws no randomness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_init: f64,
    pub tol_obj: f64,
    pub tol_grad: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 2000,
            step_init: 1.0,
            tol_obj: 1e-9,
            tol_grad: 1e-7,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.step_init > 0.0) || !(self.tol_obj > 0.0) || !(self.tol_grad > 0.0) {
            return Err(Error::invalid(
                "step_init, tol_obj, and tol_grad must be positive",
            ));
        }
        Ok(())
    }
}

/// Outcome of a relaxation solve.
#[derive(Clone, Debug)]
pub struct SolverReport {
    pub final_weights: Weights,
    /// Objective after the start point and after every accepted step;
    /// non-increasing by the backtracking contract.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub support_size: usize,
    pub converged: bool,
}

impl SolverReport {
    /// Final objective value.
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds at least the start point")
    }
}

/// Number of entries with `z_i > eps`.
pub fn support(z: &Weights, eps: f64) -> usize {
    z.vector().iter().filter(|&&v| v > eps).count()
}

/// Euclidean projection onto `{z : 0 <= z_i <= 1, 1'z = k}`.
///
/// Bisection on the multiplier of `z_i = clamp(y_i - mu, 0, 1)` narrows the
/// bracket, a linear solve on the identified active set makes `mu` exact,
/// and an exact breakpoint scan backstops pathological ties. The returned
/// point satisfies `|sum z - k| <= 1e-10`.
pub fn project_knapsack(y: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    let n = y.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "knapsack budget {k} outside [1, {n}]"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projection input has non-finite entries"));
    }
    if k == n {
        return Ok(DVector::from_element(n, 1.0));
    }
    // Already feasible (exactly): projection is the identity.
    if y.iter().all(|&v| (0.0..=1.0).contains(&v)) && y.sum() == k as f64 {
        return Ok(y.clone());
    }

    let kf = k as f64;
    let y_min = y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let y_max = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let excess = |mu: f64| y.iter().map(|&v| (v - mu).clamp(0.0, 1.0)).sum::<f64>() - kf;

    let mut lo = y_min - 1.0;
    let mut hi = y_max;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Exact pass: on the zero crossing the active set A = {i : 0 < y_i - mu < 1}
    // gives sum_A (y_i - mu) + |U| = k with U = {i : y_i - mu >= 1}.
    let mid = 0.5 * (lo + hi);
    let mut active_sum = 0.0;
    let mut active_count = 0usize;
    let mut upper_count = 0usize;
    for &v in y.iter() {
        let d = v - mid;
        if d >= 1.0 {
            upper_count += 1;
        } else if d > 0.0 {
            active_sum += v;
            active_count += 1;
        }
    }
    let mu = if active_count > 0 {
        (active_sum + upper_count as f64 - kf) / active_count as f64
    } else {
        mid
    };
    let z = DVector::from_fn(n, |i, _| (y[i] - mu).clamp(0.0, 1.0));
    if (z.sum() - kf).abs() <= KKT_TOL {
        return Ok(z);
    }
    exact_breakpoint_projection(y, k)
}

/// Exact projection by scanning the sorted breakpoints of the piecewise
/// linear map `mu -> sum clamp(y - mu, 0, 1)`. Used when bisection lands on
/// a tie pattern the linear solve cannot disambiguate.
fn exact_breakpoint_projection(y: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    let n = y.len();
    let kf = k as f64;
    let excess = |mu: f64| y.iter().map(|&v| (v - mu).clamp(0.0, 1.0)).sum::<f64>() - kf;

    let mut breaks: Vec<f64> = Vec::with_capacity(2 * n);
    for &v in y.iter() {
        breaks.push(v - 1.0);
        breaks.push(v);
    }
    breaks.sort_by(f64::total_cmp);
    // Largest breakpoint with nonnegative excess; the crossing lies between
    // it and the next one.
    let mut lo = breaks[0];
    let mut g_lo = excess(lo);
    let mut hi = *breaks.last().expect("nonempty");
    for w in breaks.windows(2) {
        let g = excess(w[1]);
        if g >= 0.0 {
            lo = w[1];
            g_lo = g;
        } else {
            hi = w[1];
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let slope = y
        .iter()
        .filter(|&&v| v - mid > 0.0 && v - mid < 1.0)
        .count();
    let mu = if slope > 0 { lo + g_lo / slope as f64 } else { lo };
    let z = DVector::from_fn(n, |i, _| (y[i] - mu).clamp(0.0, 1.0));
    let residual = (z.sum() - kf).abs();
    if residual > KKT_TOL {
        return Err(Error::NumericFailure {
            msg: "knapsack projection failed to meet the KKT residual".into(),
            residual,
        });
    }
    Ok(z)
}

/// Rows selected by greedy column-pivoted orthogonalization of `X'`:
/// the fallback seeding when the uniform start fails the PD floor.
fn pivoted_rows(x: &DesignMatrix) -> Vec<usize> {
    let n = x.n();
    let m = x.m();
    let mut residuals: Vec<DVector<f64>> = (0..n).map(|i| x.row(i)).collect();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let best = alive
            .iter()
            .copied()
            .max_by(|&a, &b| {
                residuals[a]
                    .norm_squared()
                    .total_cmp(&residuals[b].norm_squared())
                    .then(b.cmp(&a))
            })
            .expect("alive rows remain while chosen < m");
        let norm = residuals[best].norm();
        if norm <= 1e-14 {
            break;
        }
        let q = &residuals[best] / norm;
        chosen.push(best);
        alive.retain(|&i| i != best);
        for &i in &alive {
            let c = q.dot(&residuals[i]);
            residuals[i] -= c * &q;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Minimizes the relaxed criterion over the knapsack polytope by projected
/// gradient descent with Armijo backtracking.
///
/// Stops when the objective improvement drops below `tol_obj`, the projected
/// gradient norm drops below `tol_grad`, or `max_iters` is reached; the
/// final mass satisfies `|1'z - k| <= 1e-8`.
pub fn solve_relaxation(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    let n = x.n();
    let m = x.m();
    if k < m || k > n {
        return Err(Error::invalid(format!(
            "budget k = {k} outside [m = {m}, n = {n}]"
        )));
    }
    let l = order.get();
    if l > m {
        return Err(Error::invalid(format!(
            "objective order {l} exceeds parameter dimension {m}"
        )));
    }

    let uniform = DVector::from_element(n, k as f64 / n as f64);
    let mut z = project_knapsack(&uniform, k)?;
    if relaxed_value(x, &z, l).is_err() {
        let rows = pivoted_rows(x);
        let mut seed_point = DVector::zeros(n);
        for &i in &rows {
            seed_point[i] = 1.0;
        }
        z = project_knapsack(&seed_point, k)?;
        if relaxed_value(x, &z, l).is_err() {
            return Err(Error::InfeasibleProblem(
                "no positive definite start point found on the knapsack polytope".into(),
            ));
        }
    }

    let (mut f, mut grad) = relaxed_value_and_grad(x, &z, l)?;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let mut step = cfg.step_init;
        let mut accepted = None;
        while step >= MIN_STEP {
            let candidate = project_knapsack(&(&z - step * &grad), k)?;
            let dir = &candidate - &z;
            let dir_norm = dir.norm();
            if dir_norm <= 1e-15 {
                break;
            }
            let slope = grad.dot(&dir);
            match relaxed_value(x, &candidate, l) {
                Ok(f_new) if f_new <= f + ARMIJO_SLOPE * slope => {
                    accepted = Some((candidate, f_new));
                    break;
                }
                _ => step *= BACKTRACK_FACTOR,
            }
        }
        let Some((z_new, f_new)) = accepted else {
            // No acceptable step: the projected point is (numerically)
            // stationary.
            converged = true;
            break;
        };
        iterations += 1;
        let improvement = f - f_new;
        z = z_new;
        f = f_new;
        trace.push(f);
        let pair = relaxed_value_and_grad(x, &z, l)?;
        grad = pair.1;

        let pg_norm = (project_knapsack(&(&z - &grad), k)? - &z).norm();
        if improvement < cfg.tol_obj || pg_norm < cfg.tol_grad {
            converged = true;
            break;
        }
    }

    let weights = Weights::new(z, k)?;
    let support_size = support(&weights, DEFAULT_SUPPORT_EPS);
    Ok(SolverReport {
        final_weights: weights,
        objective_trace: trace,
        iterations,
        support_size,
        converged,
    })
}
