//! Elementary symmetric polynomials of vectors and matrix spectra.
//!
//! `e_l(v)` sums the products of all size-`l` subsets of the entries of `v`;
//! for a symmetric matrix `M` we evaluate `E_l(M) = e_l(lambda(M))` on the
//! spectrum. Values are kept in a scaled log domain because degree-`l`
//! products overflow doubles long before the quantities themselves stop
//! being meaningful.
//!
//! Conventions: the public entry points return exact zero for `l = 0` and
//! `l > m`. The internal recurrence uses the algebraic `e_0 = 1`, which is
//! what the inverse identity `E_l(M^{-1}) = E_{m-l}(M) / det(M)` requires at
//! `l = m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative positive-definiteness floor: a symmetric matrix is treated as
/// non-PD when its smallest eigenvalue is at or below `PD_FLOOR_REL` times
/// its largest.
pub const PD_FLOOR_REL: f64 = 1e-10;

/// Relative symmetry tolerance for matrix inputs.
const SYM_TOL_REL: f64 = 1e-12;

/// Coefficient magnitude that triggers a common rescale of the recurrence
/// state (2^512 and its inverse).
const RESCALE_UP: f64 = 1.3407807929942597e154;
const RESCALE_DOWN: f64 = 7.458340731200207e-155;
const RESCALE_LOG: f64 = 512.0 * std::f64::consts::LN_2;

/// Log-domain value of an elementary symmetric polynomial.
///
/// Stores `ln |e_l|` together with the sign so that zero (`log_value` of
/// negative infinity) and negative values survive the log transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEsp {
    order: usize,
    log_abs: f64,
    sign: i8,
}

impl LogEsp {
    pub(crate) fn zero(order: usize) -> Self {
        LogEsp {
            order,
            log_abs: f64::NEG_INFINITY,
            sign: 0,
        }
    }

    /// The algebraic `e_0 = 1`.
    pub(crate) fn one(order: usize) -> Self {
        LogEsp {
            order,
            log_abs: 0.0,
            sign: 1,
        }
    }

    pub(crate) fn from_parts(order: usize, log_abs: f64, sign: i8) -> Self {
        debug_assert!(sign == 0 || sign == 1 || sign == -1);
        LogEsp {
            order,
            log_abs: if sign == 0 { f64::NEG_INFINITY } else { log_abs },
            sign,
        }
    }

    /// Polynomial order `l` this value was computed for.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Natural log of the value: finite for positive values, negative
    /// infinity for exact zero, NaN for negative values (whose log is
    /// undefined; inspect [`LogEsp::sign`] first).
    pub fn log_value(&self) -> f64 {
        match self.sign {
            0 => f64::NEG_INFINITY,
            1 => self.log_abs,
            _ => f64::NAN,
        }
    }

    /// Natural log of the absolute value.
    pub fn log_abs(&self) -> f64 {
        self.log_abs
    }

    /// Sign of the value: -1, 0, or 1.
    pub fn sign(&self) -> i8 {
        self.sign
    }

    /// The value itself; overflows to +/-inf when `log_abs` exceeds ~709.
    pub fn value(&self) -> f64 {
        self.sign as f64 * self.log_abs.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }
}

/// Scaled table of `e_0 .. e_lmax` for one input vector.
///
/// Entries are divided by the geometric mean of the nonzero inputs (degree
/// `j` picks up `j * log_gmean`) and by a common power of two maintained to
/// keep the recurrence state inside the representable range, so
/// `e_j = coeffs[j] * exp(log_common + j * log_gmean)`.
pub(crate) struct EspTable {
    coeffs: Vec<f64>,
    log_common: f64,
    log_gmean: f64,
}

impl EspTable {
    pub(crate) fn new(values: &[f64], lmax: usize) -> Self {
        let n = values.len();
        let nonzero = values.iter().filter(|v| **v != 0.0).count();
        let log_gmean = if nonzero == 0 {
            0.0
        } else {
            values
                .iter()
                .filter(|v| **v != 0.0)
                .map(|v| v.abs().ln())
                .sum::<f64>()
                / nonzero as f64
        };
        let inv_scale = (-log_gmean).exp();

        let mut coeffs = vec![0.0; lmax + 1];
        coeffs[0] = 1.0;
        let mut log_common = 0.0;
        for (t, &v) in values.iter().enumerate() {
            let w = v * inv_scale;
            let jmax = lmax.min(t + 1);
            for j in (1..=jmax).rev() {
                coeffs[j] += w * coeffs[j - 1];
            }
            let mx = coeffs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if mx > RESCALE_UP {
                for c in &mut coeffs {
                    *c *= RESCALE_DOWN;
                }
                log_common += RESCALE_LOG;
            } else if mx > 0.0 && mx < RESCALE_DOWN && t + 1 < n {
                for c in &mut coeffs {
                    *c *= RESCALE_UP;
                }
                log_common -= RESCALE_LOG;
            }
        }
        EspTable {
            coeffs,
            log_common,
            log_gmean,
        }
    }

    /// `e_j` with the algebraic convention `e_0 = 1`.
    pub(crate) fn log_esp(&self, j: usize) -> LogEsp {
        if j == 0 {
            return LogEsp::one(0);
        }
        if j >= self.coeffs.len() {
            return LogEsp::zero(j);
        }
        let c = self.coeffs[j];
        if c == 0.0 {
            LogEsp::zero(j)
        } else {
            LogEsp::from_parts(
                j,
                c.abs().ln() + self.log_common + j as f64 * self.log_gmean,
                if c > 0.0 { 1 } else { -1 },
            )
        }
    }
}

pub(crate) fn max_abs(mat: &DMatrix<f64>) -> f64 {
    mat.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

pub(crate) fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (mat + mat.transpose())
}

fn check_square_symmetric(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
        return Err(Error::invalid(format!(
            "{what} must be square and nonempty, got {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    let scale = max_abs(mat);
    let asym = (mat - mat.transpose())
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if asym > SYM_TOL_REL * scale {
        return Err(Error::invalid(format!(
            "{what} is asymmetric beyond tolerance: max |M - M'| = {asym:e}, scale = {scale:e}"
        )));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix: eigenvalues sorted descending,
/// eigenvectors as the matching orthonormal columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn new(mat: &DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(mat, "matrix")?;
        let se = symmetrize(mat).symmetric_eigen();
        let m = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
        let eigenvalues = DVector::from_fn(m, |i, _| se.eigenvalues[order[i]]);
        let mut eigenvectors = DMatrix::zeros(m, m);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &se.eigenvectors.column(src));
        }
        Ok(SpectralDecomp {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Rebuild `U Diag(f(lambda)) U'`.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DVector::from_fn(self.eigenvalues.len(), |i, _| f(self.eigenvalues[i]));
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&d);
        symmetrize(&(scaled * self.eigenvectors.transpose()))
    }
}

/// Symmetric positive definite matrix, validated at construction.
///
/// Symmetry is required to `1e-12` relative and the smallest eigenvalue must
/// exceed [`PD_FLOOR_REL`] times the largest; the stored matrix is the
/// symmetrized input.
#[derive(Clone, Debug, PartialEq)]
pub struct PdMatrix {
    mat: DMatrix<f64>,
}

impl PdMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&mat, "matrix")?;
        let sym = symmetrize(&mat);
        let eigs = sym.symmetric_eigenvalues();
        let lambda_max = eigs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lambda_min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(lambda_max > 0.0) || lambda_min <= PD_FLOOR_REL * lambda_max {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue range [{lambda_min:e}, {lambda_max:e}] violates the pd floor"
            )));
        }
        Ok(PdMatrix { mat: sym })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// `U Diag(w) U'` for a strictly positive spectrum `w`; positivity is the
    /// caller's guarantee, so no eigenvalue re-validation happens here.
    pub(crate) fn from_positive_spectrum(decomp: &SpectralDecomp, w: &[f64]) -> PdMatrix {
        debug_assert!(w.iter().all(|&v| v > 0.0));
        let d = DVector::from_fn(w.len(), |i, _| w[i]);
        let scaled = decomp.eigenvectors() * DMatrix::from_diagonal(&d);
        PdMatrix {
            mat: symmetrize(&(scaled * decomp.eigenvectors().transpose())),
        }
    }
}

/// Whether a symmetric spectrum passes the positive-definiteness floor.
pub(crate) fn spectrum_is_pd(eigs: &[f64]) -> bool {
    let lambda_max = eigs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lambda_min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    lambda_max > 0.0 && lambda_min > PD_FLOOR_REL * lambda_max
}

/// `log E_l(M^{-1})` from the (validated positive) spectrum of `M`, as
/// `log E_{m-l}(M) - log det(M)`.
pub(crate) fn log_esp_inverse_from_eigs(eigs: &[f64], order: usize) -> f64 {
    debug_assert!(order >= 1 && order <= eigs.len());
    let log_det: f64 = eigs.iter().map(|v| v.ln()).sum();
    let table = EspTable::new(eigs, eigs.len() - order);
    table.log_esp(eigs.len() - order).log_value() - log_det
}

/// `e_l(v)` per the subset-sum definition, evaluated by the degree-truncated
/// product recurrence in a scaled log domain (`O(m l)` time).
///
/// Returns exact zero for `l = 0` and `l > len(v)`.
pub fn esp_vector(values: &[f64], order: usize) -> Result<LogEsp> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("esp_vector: non-finite input"));
    }
    if order == 0 || order > values.len() {
        return Ok(LogEsp::zero(order));
    }
    Ok(EspTable::new(values, order).log_esp(order))
}

/// `E_l(M) = e_l(lambda(M))` for symmetric `M`.
pub fn esp_matrix(mat: &DMatrix<f64>, order: usize) -> Result<LogEsp> {
    check_square_symmetric(mat, "esp_matrix input")?;
    if order == 0 || order > mat.nrows() {
        return Ok(LogEsp::zero(order));
    }
    let eigs = symmetrize(mat).symmetric_eigenvalues();
    Ok(EspTable::new(eigs.as_slice(), order).log_esp(order))
}

/// `E_l(M^{-1})` for positive definite `M`, computed without forming the
/// inverse via `E_l(M^{-1}) = E_{m-l}(M) / det(M)`.
pub fn esp_of_inverse(mat: &PdMatrix, order: usize) -> Result<LogEsp> {
    let m = mat.dim();
    if order == 0 || order > m {
        return Err(Error::invalid(format!(
            "esp_of_inverse: order {order} out of range [1, {m}]"
        )));
    }
    let eigs = mat.matrix().symmetric_eigenvalues();
    let log_value = log_esp_inverse_from_eigs(eigs.as_slice(), order);
    Ok(LogEsp::from_parts(order, log_value, 1))
}

/// Gradient of `E_l` at a symmetric matrix: `U Diag(e_{l-1}(lambda_{(i)})) U'`
/// where `lambda_{(i)}` drops the i-th eigenvalue.
///
/// The leave-one-out values re-run the recurrence without index `i` rather
/// than dividing, which is unstable near zero eigenvalues.
pub fn esp_gradient(mat: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    check_square_symmetric(mat, "esp_gradient input")?;
    let m = mat.nrows();
    if order == 0 || order > m {
        return Err(Error::invalid(format!(
            "esp_gradient: order {order} out of range [1, {m}]"
        )));
    }
    let decomp = SpectralDecomp::new(mat)?;
    let lambda = decomp.eigenvalues().as_slice();
    let grads = leave_one_out_esps(lambda, order - 1);
    let d = DVector::from_fn(m, |i, _| grads[i].value());
    let scaled = decomp.eigenvectors() * DMatrix::from_diagonal(&d);
    Ok(symmetrize(&(scaled * decomp.eigenvectors().transpose())))
}

/// `e_order(values with index i removed)` for every `i`.
pub(crate) fn leave_one_out_esps(values: &[f64], order: usize) -> Vec<LogEsp> {
    let m = values.len();
    let mut buf = Vec::with_capacity(m.saturating_sub(1));
    (0..m)
        .map(|i| {
            buf.clear();
            buf.extend(values.iter().take(i));
            buf.extend(values.iter().skip(i + 1));
            EspTable::new(&buf, order).log_esp(order)
        })
        .collect()
}

/// Point on the geodesic between positive definite matrices under the
/// affine-invariant metric: `P^{1/2} (P^{-1/2} Q P^{-1/2})^t P^{1/2}`.
pub fn geodesic_point(p: &PdMatrix, q: &PdMatrix, t: f64) -> Result<PdMatrix> {
    if p.dim() != q.dim() {
        return Err(Error::invalid(format!(
            "geodesic_point: dimension mismatch {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    if !t.is_finite() || !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!(
            "geodesic_point: t = {t} outside [0, 1]"
        )));
    }
    let dp = SpectralDecomp::new(p.matrix())?;
    let sqrt_p = dp.apply_spectral(|v| v.sqrt());
    let inv_sqrt_p = dp.apply_spectral(|v| 1.0 / v.sqrt());
    let inner = symmetrize(&(&inv_sqrt_p * q.matrix() * &inv_sqrt_p));
    let di = SpectralDecomp::new(&inner)?;
    if di.eigenvalues().iter().any(|&v| v <= 0.0) {
        return Err(Error::NumericFailure {
            msg: "geodesic_point: congruence of PD matrices lost positivity".into(),
            residual: di.eigenvalues().min(),
        });
    }
    let powered = di.apply_spectral(|v| (t * v.ln()).exp());
    PdMatrix::new(symmetrize(&(&sqrt_p * powered * &sqrt_p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&a)
    }

    fn random_pd(rng: &mut ChaCha8Rng, m: usize) -> PdMatrix {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        PdMatrix::new(&a * a.transpose() + DMatrix::identity(m, m) * 0.5).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn esp_vector_small_case() {
        let e = esp_vector(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!(rel_close(e.value(), 11.0, 1e-12));
    }

    #[test]
    fn esp_vector_order_zero_and_above_m() {
        assert!(esp_vector(&[1.0, 2.0], 0).unwrap().is_zero());
        assert!(esp_vector(&[1.0, 2.0], 3).unwrap().is_zero());
        assert_eq!(
            esp_vector(&[1.0, 2.0], 3).unwrap().log_value(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn esp_vector_constant_vector() {
        // e_l(c, ..., c) = C(m, l) c^l
        let m = 7;
        let c = 1.7f64;
        let v = vec![c; m];
        for l in 1..=m {
            let binom = (1..=l).fold(1.0, |acc, j| acc * (m - l + j) as f64 / j as f64);
            let expect = binom * c.powi(l as i32);
            assert!(rel_close(esp_vector(&v, l).unwrap().value(), expect, 1e-12));
        }
    }

    #[test]
    fn esp_vector_rejects_non_finite() {
        assert!(esp_vector(&[1.0, f64::NAN], 1).is_err());
        assert!(esp_vector(&[1.0, f64::INFINITY], 1).is_err());
    }

    #[test]
    fn esp_vector_huge_spectrum_stays_in_log_domain() {
        // Direct products of these overflow f64; the log value must not.
        let v = vec![1e200; 4];
        let e = esp_vector(&v, 3).unwrap();
        // e_3 = C(4,3) * 1e600
        let expect_log = 4.0f64.ln() + 600.0 * 10.0f64.ln();
        assert!((e.log_value() - expect_log).abs() < 1e-9 * expect_log.abs());
        assert_eq!(e.sign(), 1);
    }

    #[test]
    fn esp_matrix_identity_is_binomial() {
        let m = 6;
        let id = DMatrix::<f64>::identity(m, m);
        for l in 1..=m {
            let binom = (1..=l).fold(1.0, |acc, j| acc * (m - l + j) as f64 / j as f64);
            assert!(rel_close(esp_matrix(&id, l).unwrap().value(), binom, 1e-10));
        }
    }

    #[test]
    fn esp_matrix_diagonal_case() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!(rel_close(esp_matrix(&d, 2).unwrap().value(), 11.0, 1e-10));
    }

    #[test]
    fn esp_matrix_rank_deficient_top_order_vanishes() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = &v * v.transpose(); // rank 1 PSD
        let e = esp_matrix(&m, 3).unwrap();
        let scale = max_abs(&m).powi(3);
        assert!(e.value().abs() <= 1e-10 * scale);
    }

    #[test]
    fn esp_matrix_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(esp_matrix(&m, 1).is_err());
    }

    #[test]
    fn esp_of_inverse_diagonal() {
        let d = PdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 2.0, 3.0,
        ])))
        .unwrap();
        let e = esp_of_inverse(&d, 1).unwrap();
        assert!(rel_close(e.value(), 11.0 / 6.0, 1e-12));
    }

    #[test]
    fn esp_of_inverse_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.random_range(2..=8);
            let pd = random_pd(&mut rng, m);
            let inv = pd.matrix().clone().try_inverse().unwrap();
            for l in 1..=m {
                let via_identity = esp_of_inverse(&pd, l).unwrap().log_value();
                let via_inverse = esp_matrix(&inv, l).unwrap().log_value();
                assert!(
                    (via_identity - via_inverse).abs()
                        <= 1e-8 * via_identity.abs().max(1.0),
                    "m={m} l={l}: {via_identity} vs {via_inverse}"
                );
            }
        }
    }

    #[test]
    fn esp_of_inverse_rejects_out_of_range_order() {
        let id = PdMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(esp_of_inverse(&id, 0).is_err());
        assert!(esp_of_inverse(&id, 4).is_err());
    }

    #[test]
    fn gradient_order_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_symmetric(&mut rng, 5);
        let g = esp_gradient(&m, 1).unwrap();
        assert!(max_abs(&(g - DMatrix::identity(5, 5))) < 1e-10);
    }

    #[test]
    fn gradient_top_order_is_cofactor() {
        // grad E_m(M) = det(M) M^{-1} for invertible M
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pd = random_pd(&mut rng, 4);
        let g = esp_gradient(pd.matrix(), 4).unwrap();
        let det = pd.matrix().determinant();
        let expect = det * pd.matrix().clone().try_inverse().unwrap();
        assert!(max_abs(&(g - expect)) < 1e-9 * det.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_directional_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..20 {
            let m = rng.random_range(2..=6);
            let a = random_symmetric(&mut rng, m);
            let dir = random_symmetric(&mut rng, m);
            for l in 1..=m {
                let g = esp_gradient(&a, l).unwrap();
                let analytic = (g.transpose() * &dir).trace();
                let plus = esp_matrix(&(&a + h * &dir), l).unwrap().value();
                let minus = esp_matrix(&(&a - h * &dir), l).unwrap().value();
                let fd = (plus - minus) / (2.0 * h);
                assert!(
                    (analytic - fd).abs() <= 1e-5 * analytic.abs().max(fd.abs()).max(1e-8),
                    "m={m} l={l}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn gradient_with_repeated_eigenvalues() {
        // diag(2, 2, 1) has a repeated eigenvalue; the spectral formula must
        // still match finite differences.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dir = random_symmetric(&mut rng, 3);
        let h = 1e-5;
        for l in 1..=3 {
            let g = esp_gradient(&a, l).unwrap();
            let analytic = (g.transpose() * &dir).trace();
            let plus = esp_matrix(&(&a + h * &dir), l).unwrap().value();
            let minus = esp_matrix(&(&a - h * &dir), l).unwrap().value();
            let fd = (plus - minus) / (2.0 * h);
            assert!((analytic - fd).abs() <= 1e-3 * analytic.abs().max(1.0));
        }
    }

    #[test]
    fn lowner_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let m = rng.random_range(2..=6);
            let b = random_pd(&mut rng, m);
            let c = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let a = b.matrix() + &c * c.transpose(); // a >= b in Loewner order
            for l in 1..=m {
                let ea = esp_matrix(&a, l).unwrap().value();
                let eb = esp_matrix(b.matrix(), l).unwrap().value();
                assert!(ea >= eb - 1e-10, "m={m} l={l}: {ea} < {eb}");
            }
        }
    }

    #[test]
    fn spectral_decomp_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = rng.random_range(2..=8);
            let a = random_symmetric(&mut rng, m);
            let d = SpectralDecomp::new(&a).unwrap();
            for i in 1..m {
                assert!(d.eigenvalues()[i - 1] >= d.eigenvalues()[i]);
            }
            let u = d.eigenvectors();
            let ortho = u.transpose() * u - DMatrix::identity(m, m);
            assert!(max_abs(&ortho) <= 1e-10);
            let recon = d.apply_spectral(|v| v);
            assert!(max_abs(&(recon - &a)) <= 1e-8 * max_abs(&a).max(1e-300));
        }
    }

    #[test]
    fn pd_matrix_rejects_indefinite_and_floor_violations() {
        assert!(PdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, -0.1
        ])))
        .is_err());
        // smallest eigenvalue below 1e-10 * largest
        assert!(PdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 5e-11
        ])))
        .is_err());
        assert!(PdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 1e-9
        ])))
        .is_ok());
    }

    #[test]
    fn geodesic_endpoints_and_commuting_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = random_pd(&mut rng, 4);
        let q = random_pd(&mut rng, 4);
        let g0 = geodesic_point(&p, &q, 0.0).unwrap();
        let g1 = geodesic_point(&p, &q, 1.0).unwrap();
        assert!(max_abs(&(g0.matrix() - p.matrix())) <= 1e-10 * max_abs(p.matrix()));
        assert!(max_abs(&(g1.matrix() - q.matrix())) <= 1e-10 * max_abs(q.matrix()));

        let dp = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 9.0]));
        let dq = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 25.0]));
        let mid = geodesic_point(
            &PdMatrix::new(dp).unwrap(),
            &PdMatrix::new(dq).unwrap(),
            0.5,
        )
        .unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 15.0]));
        assert!(max_abs(&(mid.matrix() - expect)) <= 1e-9);
    }

    #[test]
    fn geodesic_midpoint_algebraic_identity() {
        // The midpoint G of P and Q satisfies G Q^{-1} G = P.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = rng.random_range(2..=6);
            let p = random_pd(&mut rng, m);
            let q = random_pd(&mut rng, m);
            let g = geodesic_point(&p, &q, 0.5).unwrap();
            let qinv = q.matrix().clone().try_inverse().unwrap();
            let back = g.matrix() * qinv * g.matrix();
            assert!(max_abs(&(back - p.matrix())) <= 1e-8 * max_abs(p.matrix()).max(1.0));
        }
    }

    #[test]
    fn geodesic_same_matrix_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_pd(&mut rng, 3);
        for &t in &[0.0, 0.3, 1.0] {
            let g = geodesic_point(&p, &p, t).unwrap();
            assert!(max_abs(&(g.matrix() - p.matrix())) <= 1e-10 * max_abs(p.matrix()));
        }
    }

    #[test]
    fn geodesic_rejects_bad_t() {
        let p = PdMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert!(geodesic_point(&p, &p, -0.1).is_err());
        assert!(geodesic_point(&p, &p, 1.1).is_err());
        assert!(geodesic_point(&p, &p, f64::NAN).is_err());
    }

    #[test]
    fn nonnegative_inputs_give_nonnegative_esp() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let m = rng.random_range(1..=10);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
            for l in 1..=m {
                assert!(esp_vector(&v, l).unwrap().sign() >= 0);
            }
        }
    }
}
