//! From weights to size-`k` designs: Bernoulli acceptance rounding, greedy
//! removal, Fedorov exchange, and the uniform baseline.
//!
//! All stochastic operations are pure functions of their inputs and a 64-bit
//! seed (ChaCha8 stream), so results are identical across platforms. Ties in
//! candidate selection always break toward the smallest index.

use std::fmt;
use std::str::FromStr;

use nalgebra::Cholesky;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::esp::{log_esp_inverse_from_eigs, max_abs, spectrum_is_pd};
use crate::objective::{
    gram_eigs_checked, gram_is_pd_quick, gram_of_rows, DesignMatrix, ObjectiveOrder, Subset,
    Weights,
};
use crate::solver::{solve_relaxation, SolverConfig, DEFAULT_SUPPORT_EPS};

/// A swap or removal must improve the objective by more than this to fire.
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Acceptance-loop guard for [`sample_rounding`]: with `k` reachable this is
/// orders of magnitude beyond the expected draw count, so hitting it means
/// the weights are effectively unroundable.
const MAX_DRAWS: usize = 100_000_000;

/// Selection methods reported by the CLI and comparison tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Uniform random feasible subset.
    Unif,
    /// Uniform start refined by Fedorov exchange.
    UnifFdv,
    /// Greedy removal from the relaxation support.
    Greedy,
    /// Greedy output refined by Fedorov exchange.
    GreedyFdv,
    /// Bernoulli rounding of the relaxation.
    Sample,
    /// The continuous relaxation itself.
    Relax,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Unif,
        Method::UnifFdv,
        Method::Greedy,
        Method::GreedyFdv,
        Method::Sample,
        Method::Relax,
    ];

    /// Table tag, e.g. `UNIF_FDV`.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Unif => "UNIF",
            Method::UnifFdv => "UNIF_FDV",
            Method::Greedy => "GREEDY",
            Method::GreedyFdv => "GREEDY_FDV",
            Method::Sample => "SAMPLE",
            Method::Relax => "RELAX",
        }
    }

    /// Command-line name, e.g. `unif-fdv`.
    pub fn flag(self) -> &'static str {
        match self {
            Method::Unif => "unif",
            Method::UnifFdv => "unif-fdv",
            Method::Greedy => "greedy",
            Method::GreedyFdv => "greedy-fdv",
            Method::Sample => "sample",
            Method::Relax => "relax",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.flag() == norm)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method '{s}' (expected one of unif, unif-fdv, greedy, greedy-fdv, sample, relax)"
                ))
            })
    }
}

impl serde::Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

/// Result of Bernoulli rounding: the subset and how many acceptance draws
/// the loop used.
#[derive(Clone, Debug)]
pub struct RoundingOutcome {
    pub subset: Subset,
    pub draws: usize,
}

/// Bernoulli acceptance rounding: repeatedly pick a row uniformly from the
/// unselected ones and accept it with probability `z_i` until `k` rows are
/// selected.
pub fn sample_rounding(z: &Weights, k: usize, seed: u64) -> Result<RoundingOutcome> {
    let n = z.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("budget {k} outside [1, {n}]")));
    }
    let positives = z.vector().iter().filter(|&&v| v > 0.0).count();
    if positives < k {
        return Err(Error::CannotRound(format!(
            "only {positives} positive weights for budget {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(k);
    let mut draws = 0usize;
    while selected.len() < k {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::CannotRound(format!(
                "acceptance loop exceeded {MAX_DRAWS} draws; weight mass is too thin"
            )));
        }
        let pos = rng.random_range(0..remaining.len());
        let i = remaining[pos];
        if rng.random_bool(z.vector()[i]) {
            remaining.swap_remove(pos);
            selected.push(i);
        }
    }
    Ok(RoundingOutcome {
        subset: Subset::new(selected, k)?,
        draws,
    })
}

/// Conditioning diagnostic for the rounding regime: `||Sigma^{-1}||_2 *
/// kappa(Sigma) * ||X||_inf^2 * log m` with `Sigma = X' Diag(z) X`.
///
/// Advisory only; small values suggest rounding preserves near-optimality.
pub fn rounding_diagnostic(x: &DesignMatrix, z: &Weights) -> Result<f64> {
    let gram = x.gram_weighted(z)?;
    let eigs = gram_eigs_checked(&gram, "rounding_diagnostic")?;
    let lambda_max = eigs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lambda_min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let inf_norm = max_abs(x.matrix());
    Ok((1.0 / lambda_min) * (lambda_max / lambda_min) * inf_norm * inf_norm
        * (x.m() as f64).ln())
}

/// Objective of a candidate Gram spectrum, or `None` when infeasible.
fn candidate_value(eigs: &[f64], l: usize) -> Option<f64> {
    if spectrum_is_pd(eigs) {
        Some(log_esp_inverse_from_eigs(eigs, l) / l as f64)
    } else {
        None
    }
}

/// Greedy removal: from `s0` down to size `k`, each round dropping the
/// element whose removal minimizes `f_l` among feasible removals (ties to
/// the smallest index).
pub fn greedy_removal(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    s0: &Subset,
) -> Result<Subset> {
    let m = x.m();
    if k < m {
        return Err(Error::invalid(format!(
            "target size {k} below parameter dimension {m}"
        )));
    }
    if s0.len() < k {
        return Err(Error::invalid(format!(
            "initial set of size {} below target {k}",
            s0.len()
        )));
    }
    x.check_indices(s0.indices())?;
    let l = order.get();
    if l > m {
        return Err(Error::invalid(format!(
            "objective order {l} exceeds parameter dimension {m}"
        )));
    }

    let mut gram = gram_of_rows(x.matrix(), s0.indices());
    gram_eigs_checked(&gram, "greedy_removal start")?;
    let mut current: Vec<usize> = s0.indices().to_vec();

    while current.len() > k {
        let best = current
            .par_iter()
            .filter_map(|&i| {
                let xi = x.row(i);
                let mut g = gram.clone();
                g.ger(-1.0, &xi, &xi, 1.0);
                if !gram_is_pd_quick(&g) {
                    return None;
                }
                let eigs = g.symmetric_eigenvalues();
                candidate_value(eigs.as_slice(), l).map(|f| (f, i))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, drop_idx)) = best else {
            return Err(Error::StuckInfeasible {
                partial: Subset::new(current.clone(), current.len())?,
            });
        };
        let xd = x.row(drop_idx);
        gram.ger(-1.0, &xd, &xd, 1.0);
        current.retain(|&i| i != drop_idx);
    }
    Subset::new(current, k)
}

/// Leverage scores `x_i' (X'X)^{-1} x_i` for every row.
fn leverage_scores(x: &DesignMatrix) -> Result<Vec<f64>> {
    let gram = gram_of_rows(x.matrix(), &(0..x.n()).collect::<Vec<_>>());
    let chol = Cholesky::new(gram).ok_or_else(|| Error::NumericFailure {
        msg: "full Gram lost positive definiteness in leverage computation".into(),
        residual: f64::NAN,
    })?;
    Ok((0..x.n())
        .map(|i| {
            let xi = x.row(i);
            let solved = chol.solve(&xi);
            xi.dot(&solved)
        })
        .collect())
}

/// Support of `z` grown to size `k` if needed: excluded rows join by
/// decreasing weight, then decreasing leverage score, then smallest index.
fn support_as_start(x: &DesignMatrix, z: &Weights, k: usize) -> Result<Vec<usize>> {
    let n = x.n();
    if z.len() != n {
        return Err(Error::invalid(format!(
            "weights length {} does not match n = {}",
            z.len(),
            n
        )));
    }
    let mut chosen: Vec<usize> = (0..n)
        .filter(|&i| z.vector()[i] > DEFAULT_SUPPORT_EPS)
        .collect();
    if chosen.len() < k {
        let leverage = leverage_scores(x)?;
        let mut excluded: Vec<usize> = (0..n)
            .filter(|&i| z.vector()[i] <= DEFAULT_SUPPORT_EPS)
            .collect();
        excluded.sort_by(|&a, &b| {
            z.vector()[b]
                .total_cmp(&z.vector()[a])
                .then(leverage[b].total_cmp(&leverage[a]))
                .then(a.cmp(&b))
        });
        let need = k - chosen.len();
        chosen.extend(excluded.into_iter().take(need));
        chosen.sort_unstable();
    }
    Ok(chosen)
}

/// Greedy removal started from the support of given relaxation weights.
pub fn greedy_from_weights(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    z: &Weights,
) -> Result<Subset> {
    let start = support_as_start(x, z, k)?;
    if start.len() == k {
        let s = Subset::new(start, k)?;
        gram_eigs_checked(&x.gram_subset(&s)?, "greedy_from_weights")?;
        return Ok(s);
    }
    let s0 = Subset::new(start.clone(), start.len())?;
    greedy_removal(x, k, order, &s0)
}

/// Solves the relaxation, then greedily removes down from its support.
pub fn greedy_from_relaxation(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    cfg: &SolverConfig,
) -> Result<Subset> {
    let report = solve_relaxation(x, k, order, cfg)?;
    greedy_from_weights(x, k, order, &report.final_weights)
}

/// Fedorov exchange: repeatedly applies the best improving swap
/// `(i in S, j not in S)` until no swap improves `f_l` by more than `1e-12`
/// or `max_sweeps` is reached. Ties break toward the smallest `(i, j)`.
pub fn fedorov_exchange(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    s_init: &Subset,
    max_sweeps: usize,
) -> Result<Subset> {
    let n = x.n();
    let m = x.m();
    if s_init.len() != k {
        return Err(Error::invalid(format!(
            "initial set has size {}, expected exactly k = {k}",
            s_init.len()
        )));
    }
    x.check_indices(s_init.indices())?;
    let l = order.get();
    if l > m {
        return Err(Error::invalid(format!(
            "objective order {l} exceeds parameter dimension {m}"
        )));
    }
    let mut gram = gram_of_rows(x.matrix(), s_init.indices());
    let start_eigs = gram.symmetric_eigenvalues();
    let Some(mut f_cur) = candidate_value(start_eigs.as_slice(), l) else {
        return Err(Error::invalid(
            "initial set for Fedorov exchange is infeasible",
        ));
    };

    let mut in_set = vec![false; n];
    for &i in s_init.indices() {
        in_set[i] = true;
    }
    let mut current: Vec<usize> = s_init.indices().to_vec();

    for _ in 0..max_sweeps {
        let outside: Vec<usize> = (0..n).filter(|&j| !in_set[j]).collect();
        if outside.is_empty() {
            break;
        }
        let best = current
            .par_iter()
            .flat_map_iter(|&i| outside.iter().map(move |&j| (i, j)))
            .filter_map(|(i, j)| {
                let xi = x.row(i);
                let xj = x.row(j);
                let mut g = gram.clone();
                g.ger(-1.0, &xi, &xi, 1.0);
                g.ger(1.0, &xj, &xj, 1.0);
                let eigs = g.symmetric_eigenvalues();
                candidate_value(eigs.as_slice(), l).map(|f| (f, i, j))
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
        let Some((f_new, i, j)) = best else { break };
        if f_cur - f_new <= IMPROVEMENT_TOL {
            break;
        }
        let xi = x.row(i);
        let xj = x.row(j);
        gram.ger(-1.0, &xi, &xi, 1.0);
        gram.ger(1.0, &xj, &xj, 1.0);
        in_set[i] = false;
        in_set[j] = true;
        let pos = current.iter().position(|&v| v == i).expect("i is in the set");
        current[pos] = j;
        f_cur = f_new;
    }
    Subset::new(current, k)
}

/// Uniform random size-`k` subset, resampled until feasible (at most 100
/// tries).
pub fn uniform_baseline(x: &DesignMatrix, k: usize, seed: u64) -> Result<Subset> {
    let n = x.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("budget {k} outside [1, {n}]")));
    }
    if k < x.m() {
        return Err(Error::InfeasibleProblem(format!(
            "budget {k} below parameter dimension {}; no feasible subset exists",
            x.m()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let gram = gram_of_rows(x.matrix(), &idx);
        let eigs = gram.symmetric_eigenvalues();
        if spectrum_is_pd(eigs.as_slice()) {
            return Ok(Subset::new(idx, k)?);
        }
    }
    Err(Error::InfeasibleProblem(
        "no feasible uniform draw in 100 tries".into(),
    ))
}
