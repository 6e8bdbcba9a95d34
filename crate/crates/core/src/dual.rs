//! Dual stationarity checks: the spectral system defining `a(H)`, its
//! closed forms at `l = 1` and `l = m`, the trace identity, and the dual
//! objective value.
//!
//! For positive definite `H` with eigenvalues `h_i`, `a(H)` shares the
//! eigenvectors of `H` and its eigenvalues solve
//! `lambda_i^2 e_{l-1}(lambda_{(i)}) = h_i e_l(lambda)`. This implies
//! `tr(H a(H)^{-1}) = l` and yields `a(H) = tr(H^{1/2}) H^{1/2}` at `l = 1`
//! and `a(H) = H` at `l = m`.
//!
//! The dual objective is `(1/l) log E_l(a(H))`. For `H` feasible for a
//! design (`x_i' H x_i <= 1` for every row) weak duality reads
//! `f_l(z) >= (1/l) log E_l(a(H)) - log(k/l)` for every feasible `z`; the
//! additive constant comes from optimizing the scale multiplier in the dual
//! derivation and vanishes at `k = l`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::esp::{esp_matrix, leave_one_out_esps, EspTable, PdMatrix, SpectralDecomp};
use crate::objective::{DesignMatrix, Weights};

const MAX_ITERS: usize = 500;
const TARGET_RESIDUAL: f64 = 1e-13;
const ACCEPT_RESIDUAL: f64 = 1e-8;

/// A solved dual point with its reported residuals.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    pub h: DMatrix<f64>,
    pub a_of_h: PdMatrix,
    /// `max_i |lambda_i^2 e_{l-1}(lambda_{(i)}) / (h_i e_l(lambda)) - 1|`.
    pub stationarity_residual: f64,
    /// `|tr(H a(H)^{-1}) - l|`.
    pub trace_residual: f64,
}

/// Relative stationarity residual of log-eigenvalues `u` against `log_h`.
fn residual(u: &[f64], log_h: &[f64], l: usize) -> f64 {
    let lambda: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
    let log_el = EspTable::new(&lambda, l).log_esp(l).log_value();
    let loo = leave_one_out_esps(&lambda, l - 1);
    (0..u.len())
        .map(|i| ((2.0 * u[i] + loo[i].log_value() - log_h[i] - log_el).exp() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// One fixed-point target: `u_i = (log h_i + log e_l(lambda) -
/// log e_{l-1}(lambda_{(i)})) / 2`.
fn fixed_point_target(u: &[f64], log_h: &[f64], l: usize) -> Vec<f64> {
    let lambda: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
    let log_el = EspTable::new(&lambda, l).log_esp(l).log_value();
    let loo = leave_one_out_esps(&lambda, l - 1);
    (0..u.len())
        .map(|i| 0.5 * (log_h[i] + log_el - loo[i].log_value()))
        .collect()
}

/// Solves `lambda_i^2 e_{l-1}(lambda_{(i)}) = h_i e_l(lambda)` for the
/// eigenvalues of `a(H)` and returns `U Diag(lambda) U'` on `H`'s
/// eigenvectors.
///
/// Damped fixed-point iteration in log coordinates from the scaled
/// `sqrt(h)` start; fails with the residual when 500 iterations cannot
/// reach `1e-8`.
pub fn solve_a_of_h(h: &DMatrix<f64>, l: usize) -> Result<PdMatrix> {
    let (decomp, lambda) = solve_eigen_system(h, l)?;
    Ok(PdMatrix::from_positive_spectrum(&decomp, &lambda))
}

fn solve_eigen_system(h: &DMatrix<f64>, l: usize) -> Result<(SpectralDecomp, Vec<f64>)> {
    let hp = PdMatrix::new(h.clone())?;
    let m = hp.dim();
    if l < 1 || l > m {
        return Err(Error::invalid(format!("order {l} outside [1, {m}]")));
    }
    let decomp = SpectralDecomp::new(hp.matrix())?;
    let log_h: Vec<f64> = decomp.eigenvalues().iter().map(|&v| v.ln()).collect();

    if l == m {
        // lambda_i^2 prod_{j != i} lambda_j = h_i prod_j lambda_j reduces to
        // lambda = h exactly.
        let lambda: Vec<f64> = decomp.eigenvalues().iter().copied().collect();
        return Ok((decomp, lambda));
    }

    // Ansatz lambda = s sqrt(h): the per-i consistent scale is
    // e_l(sqrt(h)) / e_{l-1}(sqrt(h)_{(i)}); start from their geometric mean.
    let sqrt_h: Vec<f64> = decomp.eigenvalues().iter().map(|&v| v.sqrt()).collect();
    let log_el0 = EspTable::new(&sqrt_h, l).log_esp(l).log_value();
    let loo0 = leave_one_out_esps(&sqrt_h, l - 1);
    let log_s = (0..m)
        .map(|i| log_el0 - loo0[i].log_value())
        .sum::<f64>()
        / m as f64;
    let mut u: Vec<f64> = log_h.iter().map(|&lh| 0.5 * lh + log_s).collect();

    let mut res = residual(&u, &log_h, l);
    let mut beta = 1.0f64;
    let mut iters = 0;
    while res > TARGET_RESIDUAL && iters < MAX_ITERS {
        iters += 1;
        let target = fixed_point_target(&u, &log_h, l);
        let mut accepted = false;
        for _ in 0..30 {
            let candidate: Vec<f64> = u
                .iter()
                .zip(target.iter())
                .map(|(&cur, &tgt)| cur + beta * (tgt - cur))
                .collect();
            let cand_res = residual(&candidate, &log_h, l);
            if cand_res < res {
                u = candidate;
                res = cand_res;
                beta = (beta * 1.5).min(1.0);
                accepted = true;
                break;
            }
            beta *= 0.5;
            if beta < 1e-6 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    if res > ACCEPT_RESIDUAL {
        return Err(Error::NumericFailure {
            msg: format!("stationarity system did not converge for l = {l}, m = {m}"),
            residual: res,
        });
    }
    let lambda: Vec<f64> = u.iter().map(|&v| v.exp()).collect();
    Ok((decomp, lambda))
}

/// Dual objective `(1/l) log E_l(a(H))`.
pub fn dual_value(h: &DMatrix<f64>, l: usize) -> Result<f64> {
    let a = solve_a_of_h(h, l)?;
    Ok(esp_matrix(a.matrix(), l)?.log_value() / l as f64)
}

/// Solves the system and reports the stationarity and trace residuals.
pub fn certificate(h: &DMatrix<f64>, l: usize) -> Result<DualCertificate> {
    let (decomp, lambda) = solve_eigen_system(h, l)?;
    let log_h: Vec<f64> = decomp.eigenvalues().iter().map(|&v| v.ln()).collect();
    let u: Vec<f64> = lambda.iter().map(|&v| v.ln()).collect();
    let stationarity_residual = residual(&u, &log_h, l);
    let trace = decomp
        .eigenvalues()
        .iter()
        .zip(lambda.iter())
        .map(|(&hi, &li)| hi / li)
        .sum::<f64>();
    let trace_residual = (trace - l as f64).abs();
    Ok(DualCertificate {
        h: h.clone(),
        a_of_h: PdMatrix::from_positive_spectrum(&decomp, &lambda),
        stationarity_residual,
        trace_residual,
    })
}

/// Largest constraint value `max_i x_i' H x_i`; feasible dual points keep it
/// at or below 1.
pub fn feasibility_margin(x: &DesignMatrix, h: &DMatrix<f64>) -> Result<f64> {
    if h.nrows() != x.m() || h.ncols() != x.m() {
        return Err(Error::invalid(format!(
            "H must be {m}x{m} for a design with m = {m}",
            m = x.m()
        )));
    }
    Ok((0..x.n())
        .map(|i| {
            let xi = x.row(i);
            (xi.transpose() * h * &xi)[(0, 0)]
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Feasible dual point built from primal weights: `M(z)^{-1}` rescaled so
/// the largest constraint `x_i' H x_i` is exactly 1.
pub fn feasible_dual_point(x: &DesignMatrix, z: &Weights) -> Result<DMatrix<f64>> {
    let gram = x.gram_weighted(z)?;
    let decomp = SpectralDecomp::new(&gram)?;
    if decomp.eigenvalues().iter().any(|&v| v <= 0.0) {
        return Err(Error::InfeasibleDesign(
            "weighted Gram is not positive definite".into(),
        ));
    }
    let inv = decomp.apply_spectral(|v| 1.0 / v);
    let margin = feasibility_margin(x, &inv)?;
    if !(margin > 0.0) {
        return Err(Error::NumericFailure {
            msg: "degenerate feasibility margin".into(),
            residual: margin,
        });
    }
    Ok(inv / margin)
}
