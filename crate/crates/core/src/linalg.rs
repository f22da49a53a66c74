//! Dense and sparse f64 kernels: CSR matrix-vector products, least squares
//! via Householder QR with column pivoting, forward substitution, and a
//! partially pivoted dense LU solve. Dimensions are validated at the API
//! boundary; inner loops assume consistent shapes.

use std::fmt;

pub type Vector = Vec<f64>;

/// Relative drop tolerance for the pivoted-QR least-squares solve: columns
/// whose pivot magnitude falls below this fraction of the largest pivot are
/// treated as dependent and receive a zero coefficient.
pub const LSQ_DROP_TOL: f64 = 1e-12;

/// Relative pivot threshold below which the dense LU solve reports a
/// singular matrix.
pub const LU_PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    DimensionMismatch { expected: usize, found: usize },
    ZeroDiagonal { row: usize },
    Singular { pivot_row: usize },
    NonFinite { context: &'static str },
    InvalidStructure { reason: String },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            LinalgError::ZeroDiagonal { row } => {
                write!(f, "zero or missing diagonal in triangular solve at row {row}")
            }
            LinalgError::Singular { pivot_row } => {
                write!(f, "matrix is singular to working precision (pivot row {pivot_row})")
            }
            LinalgError::NonFinite { context } => {
                write!(f, "non-finite value encountered in {context}")
            }
            LinalgError::InvalidStructure { reason } => {
                write!(f, "invalid matrix structure: {reason}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> Result<f64, LinalgError> {
    check_len(u.len(), v.len())?;
    Ok(u.iter().zip(v).map(|(a, b)| a * b).sum())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
    check_len(y.len(), x.len())?;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
    Ok(())
}

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row and all stored values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if row_ptr.len() != n_rows + 1 {
            return Err(LinalgError::InvalidStructure {
                reason: format!("row_ptr has {} entries for {} rows", row_ptr.len(), n_rows),
            });
        }
        if row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(LinalgError::InvalidStructure {
                reason: "row_ptr must start at 0 and end at nnz".into(),
            });
        }
        if col_idx.len() != values.len() {
            return Err(LinalgError::InvalidStructure {
                reason: "col_idx and values length differ".into(),
            });
        }
        for i in 0..n_rows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(LinalgError::InvalidStructure {
                    reason: format!("row_ptr decreases at row {i}"),
                });
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for (pos, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(LinalgError::InvalidStructure {
                        reason: format!("column index {c} out of bounds in row {i}"),
                    });
                }
                if pos > 0 && cols[pos - 1] >= c {
                    return Err(LinalgError::InvalidStructure {
                        reason: format!("column indices not strictly increasing in row {i}"),
                    });
                }
            }
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LinalgError::NonFinite { context: "sparse matrix values" });
        }
        Ok(SparseMatrix { n_rows, n_cols, row_ptr, col_idx, values })
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// positions are rejected rather than summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(LinalgError::InvalidStructure {
                    reason: format!("triplet ({r}, {c}) out of bounds"),
                });
            }
            if prev == Some((r, c)) {
                return Err(LinalgError::InvalidStructure {
                    reason: format!("duplicate triplet at ({r}, {c})"),
                });
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_csr(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vector, LinalgError> {
        check_len(self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        check_len(self.n_cols, x.len())?;
        check_len(self.n_rows, y.len())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &a) in cols.iter().zip(vals) {
                acc += a * x[c];
            }
            y[i] = acc;
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let pos = next[c];
                col_idx[pos] = r;
                values[pos] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d.set(i, c, v);
            }
        }
        d
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_columns(columns: &[Vector]) -> Result<Self, LinalgError> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for col in columns {
            check_len(n_rows, col.len())?;
            data.extend_from_slice(col);
        }
        Ok(DenseMatrix { n_rows, n_cols, data })
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, rows: &[f64]) -> Result<Self, LinalgError> {
        check_len(n_rows * n_cols, rows.len())?;
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m.set(i, j, rows[i * n_cols + j]);
            }
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.n_rows]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.n_rows] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector, LinalgError> {
        check_len(self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            axpy(x[j], self.column(j), &mut y)?;
        }
        Ok(y)
    }

    /// `self^T x`, used for normal-equation checks.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vector, LinalgError> {
        check_len(self.n_rows, x.len())?;
        (0..self.n_cols).map(|j| dot(self.column(j), x)).collect()
    }
}

/// Outcome of a least-squares solve `min ||rhs - M c||`.
///
/// `coefficients` has one entry per column of `M`; columns dropped by the
/// rank test carry coefficient zero. `residual_vector` is `rhs - M c`
/// evaluated explicitly, so it can be re-verified by multiplication.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSolution {
    pub coefficients: Vector,
    pub residual_vector: Vector,
    pub residual_norm: f64,
    pub rank: usize,
}

/// Minimum-residual solve via Householder QR with column pivoting.
///
/// Pivot columns are selected by largest remaining norm, which makes the
/// factorization deterministic and puts dependent columns last; a column is
/// dropped once its pivot magnitude falls below [`LSQ_DROP_TOL`] times the
/// largest pivot. A matrix with zero columns yields an empty coefficient
/// vector and `residual_vector == rhs`.
pub fn solve_least_squares(
    m: &DenseMatrix,
    rhs: &[f64],
) -> Result<LeastSquaresSolution, LinalgError> {
    check_len(m.n_rows(), rhs.len())?;
    if !m.data.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite { context: "least-squares matrix" });
    }
    if !rhs.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite { context: "least-squares right-hand side" });
    }

    let rows = m.n_rows();
    let cols = m.n_cols();
    let mut a = m.data.clone();
    let mut qtb = rhs.to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut rank = 0;
    let mut first_pivot = 0.0;

    let col_range = |j: usize| -> std::ops::Range<usize> { j * rows..(j + 1) * rows };

    for j in 0..rows.min(cols) {
        // Pivot: remaining column with the largest tail norm, recomputed
        // fresh to avoid downdating drift. Ties keep the lowest index.
        let mut best = j;
        let mut best_norm = 0.0;
        for c in j..cols {
            let tail = &a[col_range(c)][j..];
            let nc = norm2(tail);
            if nc > best_norm {
                best_norm = nc;
                best = c;
            }
        }
        if best != j {
            for i in 0..rows {
                a.swap(i + j * rows, i + best * rows);
            }
            perm.swap(j, best);
        }

        if j == 0 {
            first_pivot = best_norm;
            if first_pivot == 0.0 {
                break;
            }
        } else if best_norm < LSQ_DROP_TOL * first_pivot {
            break;
        }
        rank = j + 1;

        // Householder reflection zeroing column j below the diagonal.
        let x0 = a[j + j * rows];
        let alpha = if x0 >= 0.0 { -best_norm } else { best_norm };
        let mut v: Vector = a[col_range(j)][j..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v)?;
        if vnorm2 > 0.0 {
            let beta = 2.0 / vnorm2;
            for c in j + 1..cols {
                let range = col_range(c);
                let tail = &mut a[range][j..];
                let s = beta * dot(&v, tail)?;
                axpy(-s, &v, tail)?;
            }
            let tail = &mut qtb[j..];
            let s = beta * dot(&v, tail)?;
            axpy(-s, &v, tail)?;
        }
        let range = col_range(j);
        a[range.clone()][j] = alpha;
        for i in j + 1..rows {
            a[range.start + i] = 0.0;
        }
    }

    // Back substitution on the leading rank x rank triangle.
    let mut y = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut acc = qtb[i];
        for c in i + 1..rank {
            acc -= a[i + c * rows] * y[c];
        }
        y[i] = acc / a[i + i * rows];
    }

    let mut coefficients = vec![0.0; cols];
    for j in 0..rank {
        coefficients[perm[j]] = y[j];
    }

    let mut residual_vector = rhs.to_vec();
    for c in 0..cols {
        if coefficients[c] != 0.0 {
            axpy(-coefficients[c], m.column(c), &mut residual_vector)?;
        }
    }
    let residual_norm = norm2(&residual_vector);

    Ok(LeastSquaresSolution { coefficients, residual_vector, residual_norm, rank })
}

/// Solves `L w = v` for lower-triangular CSR `L` by forward substitution.
/// Rows must carry a nonzero diagonal; entries above the diagonal are
/// structural errors.
pub fn forward_substitution(l: &SparseMatrix, v: &[f64]) -> Result<Vector, LinalgError> {
    if l.n_rows() != l.n_cols() {
        return Err(LinalgError::InvalidStructure {
            reason: "triangular solve requires a square matrix".into(),
        });
    }
    check_len(l.n_rows(), v.len())?;
    let n = l.n_rows();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let (cols, vals) = l.row(i);
        let mut acc = v[i];
        let mut diag = None;
        for (&c, &a) in cols.iter().zip(vals) {
            if c < i {
                acc -= a * w[c];
            } else if c == i {
                diag = Some(a);
            } else {
                return Err(LinalgError::InvalidStructure {
                    reason: format!("entry above the diagonal at ({i}, {c})"),
                });
            }
        }
        match diag {
            Some(d) if d != 0.0 => w[i] = acc / d,
            _ => return Err(LinalgError::ZeroDiagonal { row: i }),
        }
    }
    Ok(w)
}

/// Dense direct solve via LU with partial pivoting. Used as a small-scale
/// oracle; reports singularity when a pivot falls below [`LU_PIVOT_TOL`]
/// times the largest entry magnitude.
pub fn dense_solve(a: &DenseMatrix, rhs: &[f64]) -> Result<Vector, LinalgError> {
    if a.n_rows() != a.n_cols() {
        return Err(LinalgError::InvalidStructure {
            reason: "direct solve requires a square matrix".into(),
        });
    }
    check_len(a.n_rows(), rhs.len())?;
    let n = a.n_rows();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(LinalgError::Singular { pivot_row: 0 });
    }
    let threshold = LU_PIVOT_TOL * scale;
    let mut lu = a.data.clone();
    let mut x = rhs.to_vec();

    for k in 0..n {
        let mut p = k;
        let mut pmax = lu[k + k * n].abs();
        for i in k + 1..n {
            let v = lu[i + k * n].abs();
            if v > pmax {
                pmax = v;
                p = i;
            }
        }
        if pmax < threshold {
            return Err(LinalgError::Singular { pivot_row: k });
        }
        if p != k {
            for c in 0..n {
                lu.swap(k + c * n, p + c * n);
            }
            x.swap(k, p);
        }
        let pivot = lu[k + k * n];
        for i in k + 1..n {
            let f = lu[i + k * n] / pivot;
            if f != 0.0 {
                for c in k + 1..n {
                    lu[i + c * n] -= f * lu[k + c * n];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for c in i + 1..n {
            acc -= lu[i + c * n] * x[c];
        }
        x[i] = acc / lu[i + i * n];
    }
    Ok(x)
}
