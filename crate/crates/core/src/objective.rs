//! The ESP-design objective: discrete criterion over row subsets, its
//! continuous relaxation over weights, and the relaxed gradient.
//!
//! For a design matrix `X` and subset `S` the criterion is
//! `f_l(S) = (1/l) log E_l((X_S' X_S)^{-1})`; `l = 1` is A-optimal design,
//! `l = m` is D-optimal. The relaxation replaces the subset by weights
//! `z in [0,1]^n` through the Gram `M(z) = X' Diag(z) X`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::esp::{
    leave_one_out_esps, log_esp_inverse_from_eigs, spectrum_is_pd, EspTable, PdMatrix,
    SpectralDecomp, PD_FLOOR_REL,
};

/// Candidate experiment matrix: `n` rows (experiments) by `m` columns
/// (parameters), full column rank.
///
/// Rank is checked at construction: the smallest singular value must exceed
/// [`PD_FLOOR_REL`] times the largest.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, m) = x.shape();
        if m == 0 || n < m {
            return Err(Error::invalid(format!(
                "design matrix must have n >= m >= 1, got {n}x{m}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        let sv = x.clone().singular_values();
        let s_max = sv.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let s_min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(s_max > 0.0) || s_min <= PD_FLOOR_REL * s_max {
            return Err(Error::invalid(format!(
                "design matrix is rank deficient: singular values in [{s_min:e}, {s_max:e}]"
            )));
        }
        Ok(DesignMatrix { x })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Number of candidate experiments (rows).
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Parameter dimension (columns).
    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Row `i` as a column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Gram matrix `X_S' X_S` of the rows listed in `s`.
    pub fn gram_subset(&self, s: &Subset) -> Result<DMatrix<f64>> {
        self.check_indices(s.indices())?;
        Ok(gram_of_rows(&self.x, s.indices()))
    }

    /// Weighted Gram `X' Diag(z) X`.
    pub fn gram_weighted(&self, z: &Weights) -> Result<DMatrix<f64>> {
        if z.len() != self.n() {
            return Err(Error::invalid(format!(
                "weights length {} does not match n = {}",
                z.len(),
                self.n()
            )));
        }
        Ok(gram_weighted_raw(&self.x, z.vector()))
    }

    pub(crate) fn check_indices(&self, indices: &[usize]) -> Result<()> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for n = {}",
                self.n()
            )));
        }
        Ok(())
    }
}

/// Order `l` of the criterion, validated against a parameter dimension `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectiveOrder {
    l: usize,
}

impl ObjectiveOrder {
    pub fn new(l: usize, m: usize) -> Result<Self> {
        if l < 1 || l > m {
            return Err(Error::invalid(format!(
                "objective order {l} outside [1, {m}]"
            )));
        }
        Ok(ObjectiveOrder { l })
    }

    pub fn get(&self) -> usize {
        self.l
    }

    fn check_dim(&self, m: usize) -> Result<()> {
        if self.l > m {
            return Err(Error::invalid(format!(
                "objective order {} exceeds parameter dimension {m}",
                self.l
            )));
        }
        Ok(())
    }
}

/// Strictly increasing list of selected row indices with its size budget.
///
/// `budget_k` is the largest size this set is allowed to have; solver
/// outputs always satisfy `len() <= budget_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subset {
    indices: Vec<usize>,
    budget_k: usize,
}

impl Subset {
    /// Sorts the indices; duplicates or `len > budget_k` are input errors.
    pub fn new(mut indices: Vec<usize>, budget_k: usize) -> Result<Self> {
        if budget_k == 0 {
            return Err(Error::invalid("subset budget must be at least 1"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("subset indices must be distinct"));
        }
        if indices.len() > budget_k {
            return Err(Error::invalid(format!(
                "subset of size {} exceeds budget {budget_k}",
                indices.len()
            )));
        }
        Ok(Subset { indices, budget_k })
    }

    /// The full set `{0, .., n-1}` with budget `n`.
    pub fn full(n: usize) -> Result<Self> {
        Subset::new((0..n).collect(), n.max(1))
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn budget(&self) -> usize {
        self.budget_k
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Size of the intersection with another subset.
    pub fn intersection_count(&self, other: &Subset) -> usize {
        self.indices.iter().filter(|&&i| other.contains(i)).count()
    }
}

impl serde::Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.indices.iter())
    }
}

/// Continuous design weights `z in [0,1]^n` with budget `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    z: DVector<f64>,
    budget_k: usize,
}

impl Weights {
    /// Accepts entries within `1e-12` of the box (clamping them) and a total
    /// mass up to `k + 1e-8`.
    pub fn new(z: DVector<f64>, budget_k: usize) -> Result<Self> {
        if budget_k == 0 {
            return Err(Error::invalid("weight budget must be at least 1"));
        }
        if z.is_empty() {
            return Err(Error::invalid("weights must be nonempty"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights have non-finite entries"));
        }
        if z.iter().any(|&v| v < -1e-12 || v > 1.0 + 1e-12) {
            return Err(Error::invalid("weights outside [0, 1]"));
        }
        let z = z.map(|v| v.clamp(0.0, 1.0));
        let mass = z.sum();
        if mass > budget_k as f64 + 1e-8 {
            return Err(Error::invalid(format!(
                "total weight {mass} exceeds budget {budget_k}"
            )));
        }
        Ok(Weights { z, budget_k })
    }

    /// Indicator weights of a subset in ambient dimension `n`.
    pub fn indicator(n: usize, s: &Subset) -> Result<Self> {
        if let Some(&bad) = s.indices().iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "subset index {bad} out of range for n = {n}"
            )));
        }
        let mut z = DVector::zeros(n);
        for &i in s.indices() {
            z[i] = 1.0;
        }
        Weights::new(z, s.budget().max(s.len()))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn budget(&self) -> usize {
        self.budget_k
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Total mass `sum_i z_i`.
    pub fn mass(&self) -> f64 {
        self.z.sum()
    }
}

pub(crate) fn gram_of_rows(x: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    let xs = x.select_rows(indices.iter());
    xs.transpose() * xs
}

pub(crate) fn gram_weighted_raw(x: &DMatrix<f64>, z: &DVector<f64>) -> DMatrix<f64> {
    let mut y = x.clone();
    for i in 0..x.nrows() {
        let s = z[i].max(0.0).sqrt();
        y.row_mut(i).scale_mut(s);
    }
    y.transpose() * y
}

/// Eigenvalues of a Gram matrix, or an infeasibility error when the spectrum
/// fails the positive-definiteness floor.
pub(crate) fn gram_eigs_checked(gram: &DMatrix<f64>, what: &str) -> Result<DVector<f64>> {
    let eigs = gram.symmetric_eigenvalues();
    if !spectrum_is_pd(eigs.as_slice()) {
        return Err(Error::InfeasibleDesign(format!(
            "{what}: Gram matrix is not positive definite"
        )));
    }
    Ok(eigs)
}

/// Cheap feasibility probe: Cholesky success on the floored Gram.
///
/// Conservative short-circuit only; callers treat the eigenvalue check in
/// [`gram_eigs_checked`] as authoritative.
pub(crate) fn gram_is_pd_quick(gram: &DMatrix<f64>) -> bool {
    let max_diag = gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    if !(max_diag > 0.0) {
        return false;
    }
    let shift = 0.5 * PD_FLOOR_REL * max_diag;
    let shifted = gram - DMatrix::identity(gram.nrows(), gram.ncols()) * shift;
    Cholesky::new(shifted).is_some()
}

/// Discrete criterion `f_l(S) = (1/l) log E_l((X_S' X_S)^{-1})`.
pub fn f_discrete(x: &DesignMatrix, s: &Subset, order: ObjectiveOrder) -> Result<f64> {
    order.check_dim(x.m())?;
    x.check_indices(s.indices())?;
    if s.len() < x.m() {
        return Err(Error::InfeasibleDesign(format!(
            "subset of size {} cannot span parameter dimension {}",
            s.len(),
            x.m()
        )));
    }
    let gram = gram_of_rows(x.matrix(), s.indices());
    let eigs = gram_eigs_checked(&gram, "f_discrete")?;
    Ok(log_esp_inverse_from_eigs(eigs.as_slice(), order.get()) / order.get() as f64)
}

/// Relaxed criterion `f_l(z) = (1/l) log E_l((X' Diag(z) X)^{-1})`.
pub fn f_relaxed(x: &DesignMatrix, z: &Weights, order: ObjectiveOrder) -> Result<f64> {
    order.check_dim(x.m())?;
    if z.len() != x.n() {
        return Err(Error::invalid(format!(
            "weights length {} does not match n = {}",
            z.len(),
            x.n()
        )));
    }
    relaxed_value(x, z.vector(), order.get())
}

pub(crate) fn relaxed_value(x: &DesignMatrix, z: &DVector<f64>, l: usize) -> Result<f64> {
    let gram = gram_weighted_raw(x.matrix(), z);
    let eigs = gram_eigs_checked(&gram, "f_relaxed")?;
    Ok(log_esp_inverse_from_eigs(eigs.as_slice(), l) / l as f64)
}

/// Spectrum of the gradient kernel `W`: for eigenvalues `lambda` of the Gram,
/// `w_j = e_{m-l}(lambda_{(j)}) / (lambda_j e_{m-l}(lambda))`.
///
/// This is the cancellation-free form of `1/lambda_j -
/// e_{m-l-1}(lambda_{(j)}) / e_{m-l}(lambda)`; every factor is positive, so
/// it is evaluated entirely in the log domain.
pub(crate) fn w_spectrum(lambda: &[f64], l: usize) -> Vec<f64> {
    let m = lambda.len();
    let loo = leave_one_out_esps(lambda, m - l);
    let log_el = EspTable::new(lambda, m - l).log_esp(m - l).log_value();
    (0..m)
        .map(|j| (loo[j].log_value() - lambda[j].ln() - log_el).exp())
        .collect()
}

/// Gradient of `f_relaxed` in `z`: entry `i` is `-(1/l) x_i' W x_i`.
pub fn grad_relaxed(x: &DesignMatrix, z: &Weights, order: ObjectiveOrder) -> Result<DVector<f64>> {
    order.check_dim(x.m())?;
    if z.len() != x.n() {
        return Err(Error::invalid(format!(
            "weights length {} does not match n = {}",
            z.len(),
            x.n()
        )));
    }
    Ok(relaxed_value_and_grad(x, z.vector(), order.get())?.1)
}

/// Objective and gradient from a single eigendecomposition of the Gram.
pub(crate) fn relaxed_value_and_grad(
    x: &DesignMatrix,
    z: &DVector<f64>,
    l: usize,
) -> Result<(f64, DVector<f64>)> {
    let gram = gram_weighted_raw(x.matrix(), z);
    let decomp = SpectralDecomp::new(&gram)?;
    let lambda = decomp.eigenvalues().as_slice();
    if !spectrum_is_pd(lambda) {
        return Err(Error::InfeasibleDesign(
            "grad_relaxed: Gram matrix is not positive definite".into(),
        ));
    }
    let f = log_esp_inverse_from_eigs(lambda, l) / l as f64;
    let w = w_spectrum(lambda, l);
    let half = DMatrix::from_fn(x.m(), x.m(), |r, c| {
        decomp.eigenvectors()[(r, c)] * w[c].sqrt()
    });
    let t = x.matrix() * half;
    let grad = DVector::from_fn(x.n(), |i, _| -t.row(i).norm_squared() / l as f64);
    Ok((f, grad))
}

/// The gradient kernel `W = U (Lambda^{-1} - Diag(e_{m-l-1}(Lambda_{(i)})) /
/// e_{m-l}(Lambda)) U'`, positive definite for a PD Gram.
pub fn w_matrix(x: &DesignMatrix, z: &Weights, order: ObjectiveOrder) -> Result<PdMatrix> {
    order.check_dim(x.m())?;
    let gram = x.gram_weighted(z)?;
    let decomp = SpectralDecomp::new(&gram)?;
    let lambda = decomp.eigenvalues().as_slice();
    if !spectrum_is_pd(lambda) {
        return Err(Error::InfeasibleDesign(
            "w_matrix: Gram matrix is not positive definite".into(),
        ));
    }
    let w = w_spectrum(lambda, order.get());
    Ok(PdMatrix::from_positive_spectrum(&decomp, &w))
}
