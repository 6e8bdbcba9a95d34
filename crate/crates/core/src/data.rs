//! Instance sources and evaluation metrics: synthetic Gaussian generators,
//! CSV ingestion with column normalization, holdout prediction error, and
//! design-matrix sparsity.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::objective::{DesignMatrix, Subset};

/// Zero threshold for sparsity counting.
const SPARSITY_EPS: f64 = 1e-12;

/// Which synthetic family to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Rows i.i.d. `N(0, K^{-1})` for a random sparse diagonally dominant
    /// precision `K`.
    SparsePrecision,
    /// Rows i.i.d. `N(0, Diag(1, 2^{-alpha}, ..., m^{-alpha}))`.
    SkewedCovariance,
}

/// Validated parameters of a synthetic instance.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    kind: SyntheticKind,
    n: usize,
    m: usize,
    density_d: f64,
    alpha: f64,
    seed: u64,
}

impl SyntheticSpec {
    /// Sparse-precision family with off-diagonal fill probability `density`.
    pub fn sparse_precision(n: usize, m: usize, density: f64, seed: u64) -> Result<Self> {
        check_shape(n, m)?;
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::invalid(format!(
                "density must lie in (0, 1], got {density}"
            )));
        }
        Ok(Self {
            kind: SyntheticKind::SparsePrecision,
            n,
            m,
            density_d: density,
            alpha: 0.0,
            seed,
        })
    }

    /// Skewed-covariance family with column-`j` variance `j^{-alpha}`.
    pub fn skewed(n: usize, m: usize, alpha: f64, seed: u64) -> Result<Self> {
        check_shape(n, m)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha must be a finite nonnegative real, got {alpha}"
            )));
        }
        Ok(Self {
            kind: SyntheticKind::SkewedCovariance,
            n,
            m,
            density_d: 0.0,
            alpha,
            seed,
        })
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn density(&self) -> f64 {
        self.density_d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if m < 1 || n < m {
        return Err(Error::invalid(format!(
            "need n >= m >= 1, got n = {n}, m = {m}"
        )));
    }
    Ok(())
}

/// Per-column normalization record; `scales[j]` is the divisor applied to
/// column `j` (all ones when unnormalized).
#[derive(Clone, Debug)]
pub struct ColumnStats {
    scales: Vec<f64>,
    normalized: bool,
}

impl ColumnStats {
    fn unnormalized(m: usize) -> Self {
        Self {
            scales: vec![1.0; m],
            normalized: false,
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }
}

/// A design matrix with optional responses and its normalization record.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: DesignMatrix,
    y: Option<DVector<f64>>,
    column_stats: ColumnStats,
}

impl Dataset {
    pub fn new(x: DesignMatrix, y: Option<DVector<f64>>, column_stats: ColumnStats) -> Result<Self> {
        if let Some(y) = &y {
            if y.len() != x.n() {
                return Err(Error::invalid(format!(
                    "response length {} does not match n = {}",
                    y.len(),
                    x.n()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("responses must be finite"));
            }
        }
        if column_stats.scales.len() != x.m() {
            return Err(Error::invalid(format!(
                "column stats cover {} columns, design has {}",
                column_stats.scales.len(),
                x.m()
            )));
        }
        Ok(Self { x, y, column_stats })
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn y(&self) -> Option<&DVector<f64>> {
        self.y.as_ref()
    }

    pub fn column_stats(&self) -> &ColumnStats {
        &self.column_stats
    }
}

/// Draws the dataset described by `spec`; pure in `(spec, seed)`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    match spec.kind {
        SyntheticKind::SparsePrecision => gen_sparse_precision(spec),
        SyntheticKind::SkewedCovariance => gen_skewed(spec),
    }
}

/// Random sparse precision: off-diagonal `(i, j)` filled `U(-1, 1)` with
/// probability `d`, diagonal set to one plus the row's off-diagonal
/// absolute sum, which makes the matrix strictly diagonally dominant and
/// hence positive definite.
fn sparse_precision_matrix(m: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut k = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            if rng.random_bool(density) {
                let v: f64 = rng.random_range(-1.0..1.0);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| k[(i, j)].abs()).sum();
        k[(i, i)] = 1.0 + off;
    }
    k
}

/// Fraction of strictly-off-diagonal entries of the generated precision that
/// are nonzero, for the given spec. Exposed for density diagnostics.
pub fn precision_offdiag_density(spec: &SyntheticSpec) -> Result<f64> {
    if spec.kind != SyntheticKind::SparsePrecision {
        return Err(Error::invalid("spec is not sparse-precision"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = sparse_precision_matrix(spec.m, spec.density_d, &mut rng);
    let m = spec.m;
    if m < 2 {
        return Ok(0.0);
    }
    let nonzero = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && k[(i, j)] != 0.0)
        .count();
    Ok(nonzero as f64 / (m * (m - 1)) as f64)
}

/// Samples `n` rows i.i.d. from `N(0, K^{-1})` for a random sparse
/// precision `K`: with `K = L L'` and `g ~ N(0, I)`, the solve `L' v = g`
/// has covariance `L^{-T} L^{-1} = K^{-1}`.
pub fn gen_sparse_precision(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.kind != SyntheticKind::SparsePrecision {
        return Err(Error::invalid("spec is not sparse-precision"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = sparse_precision_matrix(spec.m, spec.density_d, &mut rng);
    let chol = Cholesky::new(k).ok_or_else(|| Error::NumericFailure {
        msg: "diagonally dominant precision failed to factor".into(),
        residual: f64::NAN,
    })?;
    let lt = chol.l().transpose();
    let mut x = DMatrix::<f64>::zeros(spec.n, spec.m);
    let mut g = DVector::<f64>::zeros(spec.m);
    for i in 0..spec.n {
        for gj in g.iter_mut() {
            *gj = rng.sample(StandardNormal);
        }
        let v = lt
            .solve_upper_triangular(&g)
            .ok_or_else(|| Error::NumericFailure {
                msg: "triangular solve failed in row sampling".into(),
                residual: f64::NAN,
            })?;
        x.row_mut(i).copy_from(&v.transpose());
    }
    Dataset::new(
        DesignMatrix::new(x)?,
        None,
        ColumnStats::unnormalized(spec.m),
    )
}

/// Samples `n` rows i.i.d. from `N(0, Diag(j^{-alpha}))`, columns indexed
/// from 1.
pub fn gen_skewed(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.kind != SyntheticKind::SkewedCovariance {
        return Err(Error::invalid("spec is not skewed-covariance"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd: Vec<f64> = (1..=spec.m)
        .map(|j| (j as f64).powf(-spec.alpha / 2.0))
        .collect();
    let mut x = DMatrix::<f64>::zeros(spec.n, spec.m);
    for i in 0..spec.n {
        for j in 0..spec.m {
            let g: f64 = rng.sample(StandardNormal);
            x[(i, j)] = g * sd[j];
        }
    }
    Dataset::new(
        DesignMatrix::new(x)?,
        None,
        ColumnStats::unnormalized(spec.m),
    )
}

/// How to pick the response column out of a CSV.
#[derive(Clone, Debug)]
pub enum ColumnSelector {
    /// Match a header name exactly.
    Name(String),
    /// Zero-based column index in file order.
    Index(usize),
}

fn csv_io_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.record() as usize + 1);
    Error::Csv {
        row,
        column: None,
        msg: e.to_string(),
    }
}

/// Loads a headered numeric CSV. `response` optionally splits one column
/// off as `y`; `normalize` rescales every remaining feature column to unit
/// Euclidean norm, recording the divisors.
///
/// Row loci in errors are 1-based over data rows (the header is row 0);
/// column loci are 0-based in file order.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: Option<&ColumnSelector>,
    normalize: bool,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(csv_io_error)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_io_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let width = headers.len();
    if width == 0 {
        return Err(Error::Csv {
            row: Some(0),
            column: None,
            msg: "empty header".into(),
        });
    }

    let response_idx = match response {
        None => None,
        Some(ColumnSelector::Index(i)) => {
            if *i >= width {
                return Err(Error::Csv {
                    row: Some(0),
                    column: Some(*i),
                    msg: format!("response index {i} out of range for {width} columns"),
                });
            }
            Some(*i)
        }
        Some(ColumnSelector::Name(name)) => {
            Some(headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::Csv {
                    row: Some(0),
                    column: None,
                    msg: format!("no column named {name:?}"),
                }
            })?)
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y_vals: Vec<f64> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(csv_io_error)?;
        if record.len() != width {
            return Err(Error::Csv {
                row: Some(row_no),
                column: None,
                msg: format!("expected {width} cells, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(width - response_idx.map_or(0, |_| 1));
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row: Some(row_no),
                column: Some(col),
                msg: format!("cell {cell:?} is not numeric"),
            })?;
            if !value.is_finite() {
                return Err(Error::Csv {
                    row: Some(row_no),
                    column: Some(col),
                    msg: format!("cell {cell:?} is not finite"),
                });
            }
            if Some(col) == response_idx {
                y_vals.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }

    let n = rows.len();
    let m = width - response_idx.map_or(0, |_| 1);
    if m == 0 {
        return Err(Error::Csv {
            row: None,
            column: None,
            msg: "no feature columns left after removing the response".into(),
        });
    }
    if n == 0 {
        return Err(Error::Csv {
            row: None,
            column: None,
            msg: "no data rows".into(),
        });
    }
    let mut x = DMatrix::<f64>::from_fn(n, m, |i, j| rows[i][j]);

    let stats = if normalize {
        let mut scales = Vec::with_capacity(m);
        for j in 0..m {
            let norm = x.column(j).norm();
            if norm <= f64::MIN_POSITIVE {
                return Err(Error::Csv {
                    row: None,
                    column: Some(j),
                    msg: "feature column has zero norm, cannot normalize".into(),
                });
            }
            x.column_mut(j).scale_mut(1.0 / norm);
            scales.push(norm);
        }
        ColumnStats {
            scales,
            normalized: true,
        }
    } else {
        ColumnStats::unnormalized(m)
    };

    Dataset::new(
        DesignMatrix::new(x)?,
        (response_idx.is_some()).then(|| DVector::from_vec(y_vals)),
        stats,
    )
}

/// Writes the dataset as a headered CSV (`x1..xm`, then `y` when present).
/// Values are printed with shortest round-trip formatting, so the export is
/// byte-identical across platforms and reloads exactly.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(csv_io_error)?;
    let m = dataset.x.m();
    let mut headers: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
    if dataset.y.is_some() {
        headers.push("y".into());
    }
    writer.write_record(&headers).map_err(csv_io_error)?;
    let mut cell = String::new();
    for i in 0..dataset.x.n() {
        let mut record: Vec<String> = Vec::with_capacity(headers.len());
        for j in 0..m {
            cell.clear();
            write!(cell, "{}", dataset.x.matrix()[(i, j)]).expect("formatting f64");
            record.push(cell.clone());
        }
        if let Some(y) = &dataset.y {
            cell.clear();
            write!(cell, "{}", y[i]).expect("formatting f64");
            record.push(cell.clone());
        }
        writer.write_record(&record).map_err(csv_io_error)?;
    }
    writer.flush().map_err(|e| Error::Csv {
        row: None,
        column: None,
        msg: e.to_string(),
    })
}

fn least_squares(xs: &DMatrix<f64>, ys: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::InfeasibleDesign(
            "selected rows are rank deficient, least squares is not unique".into(),
        ));
    }
    svd.solve(ys, 0.0).map_err(|e| Error::NumericFailure {
        msg: format!("SVD solve failed: {e}"),
        residual: f64::NAN,
    })
}

/// Fits least squares on the rows of `s` and returns
/// `||X_H theta - y_H|| / ||y_H||` over the holdout `H = [n] \ s`. When `s`
/// covers every row the ratio is the in-sample residual.
pub fn predictive_error(x: &DesignMatrix, y: &DVector<f64>, s: &Subset) -> Result<f64> {
    if y.len() != x.n() {
        return Err(Error::invalid(format!(
            "response length {} does not match n = {}",
            y.len(),
            x.n()
        )));
    }
    x.check_indices(s.indices())?;
    if s.len() < x.m() {
        return Err(Error::InfeasibleDesign(format!(
            "need at least m = {} rows to fit, got {}",
            x.m(),
            s.len()
        )));
    }
    let xs = x.matrix().select_rows(s.indices());
    let ys = DVector::from_fn(s.len(), |i, _| y[s.indices()[i]]);
    let theta = least_squares(&xs, &ys)?;

    let holdout: Vec<usize> = (0..x.n()).filter(|i| !s.contains(*i)).collect();
    let (rows, targets): (&[usize], DVector<f64>) = if holdout.is_empty() {
        (s.indices(), ys)
    } else {
        let yh = DVector::from_fn(holdout.len(), |i, _| y[holdout[i]]);
        (&holdout, yh)
    };
    let xh = x.matrix().select_rows(rows);
    let denom = targets.norm();
    if denom <= f64::MIN_POSITIVE {
        return Err(Error::invalid(
            "holdout responses are all zero, relative error is undefined",
        ));
    }
    Ok((xh * theta - targets).norm() / denom)
}

/// Fraction of entries of `X_S` with magnitude above `1e-12`; `0` for an
/// empty subset.
pub fn sparsity_fraction(x: &DesignMatrix, s: &Subset) -> Result<f64> {
    x.check_indices(s.indices())?;
    if s.is_empty() {
        return Ok(0.0);
    }
    let total = s.len() * x.m();
    let nonzero: usize = s
        .indices()
        .iter()
        .map(|&i| {
            x.matrix()
                .row(i)
                .iter()
                .filter(|v| v.abs() > SPARSITY_EPS)
                .count()
        })
        .sum();
    Ok(nonzero as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esp::max_abs;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn generators_are_deterministic_and_shaped() {
        let spec = SyntheticSpec::sparse_precision(40, 6, 0.5, 9).unwrap();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.x().n(), 40);
        assert_eq!(a.x().m(), 6);
        assert_eq!(a.x().matrix(), b.x().matrix());
        assert!(a.y().is_none());

        let spec2 = SyntheticSpec::skewed(25, 4, 1.5, 9).unwrap();
        let c = generate(&spec2).unwrap();
        let d = generate(&spec2).unwrap();
        assert_eq!(c.x().n(), 25);
        assert_eq!(c.x().m(), 4);
        assert_eq!(c.x().matrix(), d.x().matrix());

        let e = generate(&SyntheticSpec::skewed(25, 4, 1.5, 10).unwrap()).unwrap();
        assert!(max_abs(&(c.x().matrix() - e.x().matrix())) > 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::sparse_precision(5, 6, 0.5, 0).is_err());
        assert!(SyntheticSpec::sparse_precision(6, 0, 0.5, 0).is_err());
        assert!(SyntheticSpec::sparse_precision(6, 3, 0.0, 0).is_err());
        assert!(SyntheticSpec::sparse_precision(6, 3, 1.2, 0).is_err());
        assert!(SyntheticSpec::sparse_precision(6, 3, 1.0, 0).is_ok());
        assert!(SyntheticSpec::skewed(6, 3, -0.1, 0).is_err());
        assert!(SyntheticSpec::skewed(6, 3, 0.0, 0).is_ok());
    }

    #[test]
    fn precision_density_tracks_parameter() {
        // m = 20 gives 380 ordered off-diagonal slots; realized fill for
        // these seeds stays within +/- 0.05 of the target.
        for &d in &[0.3, 0.6, 0.9] {
            for seed in 0..4u64 {
                let spec = SyntheticSpec::sparse_precision(21, 20, d, seed).unwrap();
                let frac = precision_offdiag_density(&spec).unwrap();
                assert!(
                    (frac - d).abs() <= 0.05,
                    "d={d} seed={seed}: realized {frac}"
                );
            }
        }
    }

    #[test]
    fn skewed_column_variances_follow_power_law() {
        let n = 10_000;
        for &alpha in &[0.0, 1.0] {
            let spec = SyntheticSpec::skewed(n, 5, alpha, 3).unwrap();
            let data = generate(&spec).unwrap();
            for j in 0..5 {
                let col = data.x().matrix().column(j);
                let mean = col.sum() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let expect = ((j + 1) as f64).powf(-alpha);
                assert!(
                    (var - expect).abs() <= 0.1 * expect,
                    "alpha={alpha} col={j}: var {var} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn sparse_precision_rows_have_inverse_covariance() {
        // Empirical covariance of many rows approaches K^{-1}.
        let spec = SyntheticSpec::sparse_precision(40_000, 4, 0.8, 5).unwrap();
        let data = generate(&spec).unwrap();
        let x = data.x().matrix();
        let emp = x.transpose() * x / 40_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = sparse_precision_matrix(4, 0.8, &mut rng);
        let prod = emp * k;
        let err = max_abs(&(&prod - DMatrix::<f64>::identity(4, 4)));
        assert!(err < 0.1, "||emp K - I|| = {err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = SyntheticSpec::skewed(12, 3, 0.7, 11).unwrap();
        let mut data = generate(&spec).unwrap();
        let y = DVector::from_fn(12, |i, _| (i as f64).sin() * 1e-3 + 1.0);
        data = Dataset::new(data.x().clone(), Some(y), ColumnStats::unnormalized(3)).unwrap();

        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv(&data, f.path()).unwrap();
        let back = load_csv(f.path(), Some(&ColumnSelector::Name("y".into())), false).unwrap();
        assert_eq!(back.x().matrix(), data.x().matrix());
        assert_eq!(back.y().unwrap(), data.y().unwrap());

        let f2 = tempfile::NamedTempFile::new().unwrap();
        save_csv(&back, f2.path()).unwrap();
        assert_eq!(
            std::fs::read(f.path()).unwrap(),
            std::fs::read(f2.path()).unwrap()
        );
    }

    #[test]
    fn normalization_yields_unit_columns_and_records_scales() {
        let f = write_temp("a,b\n3,1\n4,2\n0,2\n");
        let data = load_csv(f.path(), None, true).unwrap();
        assert!(data.column_stats().normalized());
        for j in 0..2 {
            assert!((data.x().matrix().column(j).norm() - 1.0).abs() <= 1e-10);
        }
        assert!((data.column_stats().scales()[0] - 5.0).abs() <= 1e-12);
        assert!((data.column_stats().scales()[1] - 3.0).abs() <= 1e-12);
        // Rescaling restores the raw values.
        let raw = load_csv(f.path(), None, false).unwrap();
        for j in 0..2 {
            let rebuilt = data.x().matrix().column(j) * data.column_stats().scales()[j];
            assert!((rebuilt - raw.x().matrix().column(j)).amax() <= 1e-12);
        }
    }

    #[test]
    fn short_row_names_its_row() {
        let f = write_temp("a,b\n1,2\n3,4\n5,6\n7,8\n9\n2,3\n");
        let err = load_csv(f.path(), None, false).unwrap_err();
        match err {
            Error::Csv { row, .. } => assert_eq!(row, Some(5)),
            other => panic!("expected Csv error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = write_temp("a,b\n1,2\n3,oops\n");
        let err = load_csv(f.path(), None, false).unwrap_err();
        match err {
            Error::Csv { row, column, .. } => {
                assert_eq!(row, Some(2));
                assert_eq!(column, Some(1));
            }
            other => panic!("expected Csv error, got {other:?}"),
        }
    }

    #[test]
    fn response_selection_by_index_and_missing_name() {
        let f = write_temp("u,v,w\n1,2,3\n4,5,6\n7,8,10\n");
        let data = load_csv(f.path(), Some(&ColumnSelector::Index(1)), false).unwrap();
        assert_eq!(data.x().m(), 2);
        assert_eq!(data.y().unwrap().as_slice(), &[2.0, 5.0, 8.0]);
        assert_eq!(data.x().matrix()[(2, 1)], 10.0);

        assert!(load_csv(f.path(), Some(&ColumnSelector::Name("z".into())), false).is_err());
        assert!(load_csv(f.path(), Some(&ColumnSelector::Index(3)), false).is_err());
    }

    #[test]
    fn rank_deficient_load_is_rejected() {
        let f = write_temp("a,b\n1,2\n2,4\n3,6\n");
        assert!(load_csv(f.path(), None, false).is_err());
    }

    #[test]
    fn noiseless_linear_responses_recover_exactly() {
        let spec = SyntheticSpec::skewed(30, 4, 0.5, 21).unwrap();
        let data = generate(&spec).unwrap();
        let theta = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = data.x().matrix() * &theta;
        let s = Subset::new(vec![0, 3, 7, 11, 15], 5).unwrap();
        let err = predictive_error(data.x(), &y, &s).unwrap();
        assert!(err <= 1e-8, "noiseless error {err}");
    }

    #[test]
    fn full_subset_gives_in_sample_ratio() {
        let spec = SyntheticSpec::skewed(10, 2, 0.0, 8).unwrap();
        let data = generate(&spec).unwrap();
        let mut y = data.x().matrix() * DVector::from_vec(vec![1.0, 1.0]);
        y[0] += 0.5;
        let s = Subset::full(10).unwrap();
        let err = predictive_error(data.x(), &y, &s).unwrap();
        assert!(err > 0.0 && err < 1.0);
    }

    #[test]
    fn matches_normal_equations_path() {
        let spec = SyntheticSpec::sparse_precision(25, 3, 0.6, 13).unwrap();
        let data = generate(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y = DVector::from_fn(25, |i, _| {
            data.x().matrix().row(i).sum() + 0.1 * rng.random_range(-1.0..1.0)
        });
        let s = Subset::new((0..9).collect(), 9).unwrap();
        let err = predictive_error(data.x(), &y, &s).unwrap();

        // Independent path: normal equations on the same rows.
        let xs = data.x().matrix().select_rows(s.indices());
        let ys = DVector::from_fn(9, |i, _| y[i]);
        let theta = (xs.transpose() * &xs)
            .cholesky()
            .unwrap()
            .solve(&(xs.transpose() * ys));
        let holdout: Vec<usize> = (9..25).collect();
        let xh = data.x().matrix().select_rows(&holdout);
        let yh = DVector::from_fn(16, |i, _| y[9 + i]);
        let expect = (xh * theta - &yh).norm() / yh.norm();
        assert!((err - expect).abs() <= 1e-10 * expect.max(1.0));
    }

    #[test]
    fn predictive_error_rejects_bad_inputs() {
        let spec = SyntheticSpec::skewed(10, 3, 0.0, 1).unwrap();
        let data = generate(&spec).unwrap();
        let y = DVector::zeros(10);
        let s = Subset::new(vec![0, 1, 2, 3], 4).unwrap();
        // All-zero holdout responses are unnormalizable.
        assert!(predictive_error(data.x(), &y, &s).is_err());
        // Too few rows to fit.
        let tiny = Subset::new(vec![0, 1], 2).unwrap();
        let y2 = DVector::from_element(10, 1.0);
        assert!(matches!(
            predictive_error(data.x(), &y2, &tiny),
            Err(Error::InfeasibleDesign(_))
        ));
        let short = DVector::from_element(9, 1.0);
        assert!(predictive_error(data.x(), &short, &s).is_err());
    }

    #[test]
    fn sparsity_fraction_counts_entries() {
        let x = DesignMatrix::new(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 4.0],
        ))
        .unwrap();
        let full = Subset::full(4).unwrap();
        assert!((sparsity_fraction(&x, &full).unwrap() - 0.5).abs() <= 1e-15);
        let dense = Subset::new(vec![0], 1).unwrap();
        assert_eq!(sparsity_fraction(&x, &dense).unwrap(), 1.0);
        let zero = Subset::new(vec![1], 1).unwrap();
        assert_eq!(sparsity_fraction(&x, &zero).unwrap(), 0.0);
        let empty = Subset::new(vec![], 3).unwrap();
        assert_eq!(sparsity_fraction(&x, &empty).unwrap(), 0.0);
        let bad = Subset::new(vec![7], 1).unwrap();
        assert!(sparsity_fraction(&x, &bad).is_err());
    }
}
