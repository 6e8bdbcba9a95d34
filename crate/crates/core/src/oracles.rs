//! Brute-force references for tests and acceptance runs: literal subset
//! enumeration for ESPs, principal-minor sums, Cauchy-Binet, exhaustive
//! optimal design, and the volume-sampling expectation.
//!
//! Nothing here calls the modules it checks: determinants come from a local
//! LU, positive definiteness from a local Cholesky, and ESP values from
//! literal subset sums. Plain `f64` arithmetic is deliberate; enumeration
//! budgets keep every quantity in range.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::objective::{DesignMatrix, ObjectiveOrder, Subset};

/// Caps on exhaustive enumeration; larger instances are refused rather than
/// attempted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_n: usize,
    pub max_m: usize,
    pub max_subsets: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_n: 12,
            max_m: 4,
            max_subsets: 1_000_000,
        }
    }
}

impl EnumerationBudget {
    fn check(&self, n: usize, m: usize, k: usize) -> Result<()> {
        if n > self.max_n {
            return Err(Error::BudgetExceeded(format!(
                "n = {n} exceeds enumeration budget max_n = {}",
                self.max_n
            )));
        }
        if m > self.max_m {
            return Err(Error::BudgetExceeded(format!(
                "m = {m} exceeds enumeration budget max_m = {}",
                self.max_m
            )));
        }
        let count = binomial(n, k);
        if count > self.max_subsets as f64 {
            return Err(Error::BudgetExceeded(format!(
                "C({n}, {k}) = {count:.0} exceeds enumeration budget max_subsets = {}",
                self.max_subsets
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (1..=k).fold(1.0, |acc, j| acc * (n - k + j) as f64 / j as f64)
}

/// Size-`k` subsets of `{0, .., n-1}` in lexicographic order.
struct Combinations {
    n: usize,
    k: usize,
    state: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            k,
            state: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.state.clone();
        let mut i = self.k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.state[i] < self.n - self.k + i {
                self.state[i] += 1;
                for j in i + 1..self.k {
                    self.state[j] = self.state[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Determinant by partial-pivot LU; returns 0 on a vanishing pivot.
fn lu_det(mat: &DMatrix<f64>) -> f64 {
    let m = mat.nrows();
    debug_assert_eq!(m, mat.ncols());
    let mut a = mat.clone();
    let mut det = 1.0;
    for j in 0..m {
        let mut pivot = j;
        for i in j + 1..m {
            if a[(i, j)].abs() > a[(pivot, j)].abs() {
                pivot = i;
            }
        }
        if a[(pivot, j)] == 0.0 {
            return 0.0;
        }
        if pivot != j {
            a.swap_rows(pivot, j);
            det = -det;
        }
        det *= a[(j, j)];
        for i in j + 1..m {
            let factor = a[(i, j)] / a[(j, j)];
            for t in j..m {
                a[(i, t)] -= factor * a[(j, t)];
            }
        }
    }
    det
}

/// Whether a symmetric matrix is PD, by a local Cholesky with pivots
/// required to exceed `1e-12` times the largest diagonal entry.
fn cholesky_pd(mat: &DMatrix<f64>) -> bool {
    let m = mat.nrows();
    let max_diag = (0..m).fold(0.0f64, |a, i| a.max(mat[(i, i)]));
    if !(max_diag > 0.0) {
        return false;
    }
    let floor = 1e-12 * max_diag;
    let mut a = mat.clone();
    for j in 0..m {
        let mut d = a[(j, j)];
        for t in 0..j {
            d -= a[(j, t)] * a[(j, t)];
        }
        if d <= floor {
            return false;
        }
        let dj = d.sqrt();
        a[(j, j)] = dj;
        for i in j + 1..m {
            let mut v = a[(i, j)];
            for t in 0..j {
                v -= a[(i, t)] * a[(j, t)];
            }
            a[(i, j)] = v / dj;
        }
    }
    true
}

fn principal_submatrix(mat: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| mat[(idx[r], idx[c])])
}

fn rows_gram(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let xs = x.select_rows(idx.iter());
    xs.transpose() * xs
}

/// Literal subset sum `e_l(v) = sum_{|I|=l} prod_{j in I} v_j`.
///
/// Follows the public `l = 0 -> 0` convention.
pub fn esp_bruteforce(v: &[f64], l: usize) -> Result<f64> {
    if v.len() > 20 {
        return Err(Error::BudgetExceeded(format!(
            "esp_bruteforce limited to m <= 20, got {}",
            v.len()
        )));
    }
    if l == 0 || l > v.len() {
        return Ok(0.0);
    }
    Ok(Combinations::new(v.len(), l)
        .map(|idx| idx.iter().map(|&i| v[i]).product::<f64>())
        .sum())
}

/// Sum of `l x l` principal minors with the algebraic `l = 0 -> 1`.
pub(crate) fn minor_sum_raw(mat: &DMatrix<f64>, l: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    if l > mat.nrows() {
        return 0.0;
    }
    Combinations::new(mat.nrows(), l)
        .map(|idx| lu_det(&principal_submatrix(mat, &idx)))
        .sum()
}

/// `E_l(M)` as the sum of `l x l` principal minors (public `l = 0 -> 0`
/// convention).
pub fn esp_minor_sum(mat: &DMatrix<f64>, l: usize) -> Result<f64> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::invalid("esp_minor_sum requires a square matrix"));
    }
    if mat.nrows() > 12 {
        return Err(Error::BudgetExceeded(format!(
            "esp_minor_sum limited to m <= 12, got {}",
            mat.nrows()
        )));
    }
    if l == 0 {
        return Ok(0.0);
    }
    Ok(minor_sum_raw(mat, l))
}

/// Verifies `det(X'X) = sum_{|S|=m} det(X_S' X_S)` to `1e-8` relative.
pub fn cauchy_binet_check(x: &DMatrix<f64>) -> Result<bool> {
    let (n, m) = x.shape();
    if n > 12 {
        return Err(Error::BudgetExceeded(format!(
            "cauchy_binet_check limited to n <= 12, got {n}"
        )));
    }
    let lhs = lu_det(&(x.transpose() * x));
    let rhs: f64 = Combinations::new(n, m)
        .map(|idx| lu_det(&rows_gram(x, &idx)))
        .sum();
    Ok((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
}

/// Objective `(1/l)(log E_{m-l}(G) - log det G)` by raw minor sums; `None`
/// when the subset Gram fails the local PD check.
fn oracle_objective(gram: &DMatrix<f64>, m: usize, l: usize) -> Option<f64> {
    if !cholesky_pd(gram) {
        return None;
    }
    let ms = minor_sum_raw(gram, m - l);
    let det = lu_det(gram);
    if !(ms > 0.0) || !(det > 0.0) {
        return None;
    }
    Some((ms.ln() - det.ln()) / l as f64)
}

/// Global minimizer of `f_l` over feasible size-`k` subsets by full
/// enumeration; ties resolve to the lexicographically smallest subset.
pub fn exhaustive_optimum(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    budget: &EnumerationBudget,
) -> Result<Subset> {
    let n = x.n();
    let m = x.m();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("budget {k} outside [1, {n}]")));
    }
    budget.check(n, m, k)?;
    let l = order.get();
    if l > m {
        return Err(Error::invalid(format!(
            "objective order {l} exceeds parameter dimension {m}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for idx in Combinations::new(n, k) {
        let gram = rows_gram(x.matrix(), &idx);
        if let Some(f) = oracle_objective(&gram, m, l) {
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, idx));
            }
        }
    }
    match best {
        Some((_, idx)) => Subset::new(idx, k),
        None => Err(Error::InfeasibleProblem(format!(
            "no feasible subset of size {k}"
        ))),
    }
}

/// Both sides of the volume-sampling expectation: over `P_S proportional to
/// det(X_S'X_S)`, the mean of `E_l((X_S'X_S)^{-1})` versus
/// `prod_{i=1}^{l} (n-m+i)/(k-m+i) * E_l((X'X)^{-1})`.
///
/// Each feasible subset contributes `det(G_S) E_l(G_S^{-1}) = E_{m-l}(G_S)`
/// to the numerator, so no matrix is inverted. Subsets whose determinant
/// falls below `1e-12` times the largest one count as rank-deficient and
/// contribute zero; when none do, the two sides agree to rounding.
pub fn volume_sampling_expectation(
    x: &DesignMatrix,
    k: usize,
    order: ObjectiveOrder,
    budget: &EnumerationBudget,
) -> Result<(f64, f64)> {
    let n = x.n();
    let m = x.m();
    if k < m || k > n {
        return Err(Error::invalid(format!("budget {k} outside [m = {m}, {n}]")));
    }
    budget.check(n, m, k)?;
    let l = order.get();
    if l > m {
        return Err(Error::invalid(format!(
            "objective order {l} exceeds parameter dimension {m}"
        )));
    }
    let full_gram = rows_gram(x.matrix(), &(0..n).collect::<Vec<_>>());
    if !cholesky_pd(&full_gram) {
        return Err(Error::NotPositiveDefinite(
            "X'X is not positive definite".into(),
        ));
    }

    let dets: Vec<f64> = Combinations::new(n, k)
        .map(|idx| lu_det(&rows_gram(x.matrix(), &idx)))
        .collect();
    let max_det = dets.iter().fold(0.0f64, |a, &b| a.max(b));
    let threshold = 1e-12 * max_det;

    let mut numerator = 0.0;
    let mut total_mass = 0.0;
    for (idx, &det) in Combinations::new(n, k).zip(dets.iter()) {
        if det > threshold {
            numerator += minor_sum_raw(&rows_gram(x.matrix(), &idx), m - l);
            total_mass += det;
        }
    }
    let lhs = numerator / total_mass;

    let factor: f64 = (1..=l)
        .map(|i| (n - m + i) as f64 / (k - m + i) as f64)
        .product();
    let rhs = factor * minor_sum_raw(&full_gram, m - l) / lu_det(&full_gram);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esp::{esp_matrix, esp_vector, symmetrize};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn combinations_lexicographic() {
        let all: Vec<Vec<usize>> = Combinations::new(5, 2).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all.first().unwrap(), &vec![0, 1]);
        assert_eq!(all.last().unwrap(), &vec![3, 4]);
        assert_eq!(Combinations::new(3, 0).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn lu_det_known_values() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((lu_det(&a) + 2.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert!((lu_det(&d) - 24.0).abs() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(lu_det(&singular).abs() < 1e-12);
    }

    #[test]
    fn cholesky_pd_agrees_with_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let m = rng.random_range(1..=5);
            let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let sym = symmetrize(&a);
            let eig_pd = sym
                .symmetric_eigenvalues()
                .iter()
                .all(|&v| v > 1e-9);
            if eig_pd != cholesky_pd(&sym) {
                // Only borderline spectra may disagree.
                let min = sym
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(f64::INFINITY, |a, &b| a.min(b));
                assert!(min.abs() < 1e-6, "disagreement on clear case, min = {min}");
            }
        }
    }

    #[test]
    fn bruteforce_hand_values() {
        assert_eq!(esp_bruteforce(&[1.0, 2.0, 3.0], 2).unwrap(), 11.0);
        assert_eq!(esp_bruteforce(&[1.0, 2.0, 3.0], 3).unwrap(), 6.0);
        assert_eq!(esp_bruteforce(&[1.0, 2.0], 0).unwrap(), 0.0);
        assert_eq!(esp_bruteforce(&[1.0, 2.0], 3).unwrap(), 0.0);
        assert!(esp_bruteforce(&vec![1.0; 21], 1).is_err());
    }

    #[test]
    fn bruteforce_cross_checks_esp_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..100 {
            let m = rng.random_range(1..=8);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            for l in 0..=m + 1 {
                let brute = esp_bruteforce(&v, l).unwrap();
                let fast = esp_vector(&v, l).unwrap().value();
                assert!(
                    (brute - fast).abs() <= 1e-8 * brute.abs().max(fast.abs()).max(1e-12),
                    "m={m} l={l}: {brute} vs {fast}"
                );
            }
        }
    }

    #[test]
    fn minor_sum_hand_values() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!((esp_minor_sum(&d, 2).unwrap() - 11.0).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(5, 5);
        assert!((esp_minor_sum(&id, 3).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(esp_minor_sum(&id, 0).unwrap(), 0.0);
        assert!(esp_minor_sum(&DMatrix::<f64>::identity(13, 13), 1).is_err());
    }

    #[test]
    fn minor_sum_cross_checks_esp_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for _ in 0..50 {
            let m = rng.random_range(1..=6);
            let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let sym = symmetrize(&a);
            for l in 1..=m {
                let minors = esp_minor_sum(&sym, l).unwrap();
                let spectral = esp_matrix(&sym, l).unwrap().value();
                assert!(
                    (minors - spectral).abs()
                        <= 1e-8 * minors.abs().max(spectral.abs()).max(1e-10),
                    "m={m} l={l}: {minors} vs {spectral}"
                );
            }
        }
    }

    #[test]
    fn cauchy_binet_cases() {
        // n = m: single subset, trivially equal.
        let square = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        assert!(cauchy_binet_check(&square).unwrap());
        // Orthonormal columns.
        let mut tall = DMatrix::zeros(4, 2);
        tall[(0, 0)] = 1.0;
        tall[(1, 1)] = 1.0;
        assert!(cauchy_binet_check(&tall).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for _ in 0..20 {
            let x = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
            assert!(cauchy_binet_check(&x).unwrap());
        }
        assert!(cauchy_binet_check(&DMatrix::<f64>::zeros(13, 2)).is_err());
    }

    #[test]
    fn exhaustive_full_budget_is_full_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let x = DesignMatrix::new(DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0)))
            .unwrap();
        let s = exhaustive_optimum(
            &x,
            6,
            ObjectiveOrder::new(1, 2).unwrap(),
            &EnumerationBudget::default(),
        )
        .unwrap();
        assert_eq!(s.indices(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn exhaustive_scalar_picks_largest_row() {
        let x = DesignMatrix::new(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0])).unwrap();
        let s = exhaustive_optimum(
            &x,
            1,
            ObjectiveOrder::new(1, 1).unwrap(),
            &EnumerationBudget::default(),
        )
        .unwrap();
        assert_eq!(s.indices(), &[2]);
    }

    #[test]
    fn exhaustive_respects_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let x = DesignMatrix::new(DMatrix::from_fn(13, 2, |_, _| rng.random_range(-1.0..1.0)))
            .unwrap();
        assert!(matches!(
            exhaustive_optimum(
                &x,
                4,
                ObjectiveOrder::new(1, 2).unwrap(),
                &EnumerationBudget::default()
            ),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn volume_sampling_equality_on_generic_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..10 {
            let x = DesignMatrix::new(DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0)))
                .unwrap();
            let (lhs, rhs) = volume_sampling_expectation(
                &x,
                3,
                ObjectiveOrder::new(1, 2).unwrap(),
                &EnumerationBudget::default(),
            )
            .unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-8 * rhs.abs(),
                "lhs = {lhs}, rhs = {rhs}"
            );
        }
    }

    #[test]
    fn volume_sampling_full_budget_factor_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let x = DesignMatrix::new(DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0)))
            .unwrap();
        let (lhs, rhs) = volume_sampling_expectation(
            &x,
            5,
            ObjectiveOrder::new(2, 2).unwrap(),
            &EnumerationBudget::default(),
        )
        .unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
    }

    #[test]
    fn volume_sampling_degenerate_rows_strict_inequality() {
        // Three copies of e1 plus two generic rows: many size-3 subsets are
        // rank deficient, so the expectation drops below the generic value.
        let x = DesignMatrix::new(DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.3, 0.9, -0.7, 0.4],
        ))
        .unwrap();
        let (lhs, rhs) = volume_sampling_expectation(
            &x,
            3,
            ObjectiveOrder::new(1, 2).unwrap(),
            &EnumerationBudget::default(),
        )
        .unwrap();
        assert!(lhs <= rhs + 1e-10);
        assert!(rhs - lhs > 1e-6, "expected strict gap, got {}", rhs - lhs);
    }
}
