//! Test problems and preconditioners: five-point finite-difference
//! Laplace and convection-diffusion operators on the unit square, plus the
//! identity, scaled-identity, and inverse-lower-triangular preconditioners
//! used with them.

use std::fmt;
use std::io::{self, Write};

use crate::linalg::{forward_substitution, LinalgError, SparseMatrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemError {
    InvalidParameter { reason: String },
    Linalg(LinalgError),
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::InvalidParameter { reason } => write!(f, "invalid parameter: {reason}"),
            ProblemError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ProblemError {}

impl From<LinalgError> for ProblemError {
    fn from(e: LinalgError) -> Self {
        ProblemError::Linalg(e)
    }
}

/// A sparse linear system `A x = b` with an initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub label: String,
    pub matrix: SparseMatrix,
    pub rhs: Vector,
    pub initial_guess: Vector,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }
}

/// Five-point Laplace operator on an `n x n` interior grid of the unit
/// square with homogeneous Dirichlet boundary, scaled by `h^2` so the
/// stencil is `4` on the diagonal and `-1` for each grid neighbor.
/// Unknowns are ordered lexicographically (x fastest); `b` is all ones and
/// the initial guess is zero.
pub fn build_laplace_2d(n: usize) -> Result<ProblemInstance, ProblemError> {
    let mut p = build_convection_diffusion_2d(n, 0.0, 0.0)?;
    p.label = format!("laplace_n{n}");
    Ok(p)
}

/// Five-point convection-diffusion operator on the same grid as
/// [`build_laplace_2d`]. `c1` and `c2` are the mesh Peclet parameters
/// `sigma_1 h / 2` and `sigma_2 h / 2` of the x- and y-direction convection
/// terms under first-order upwinding-free central differences: the stencil
/// is `4` center, `-1 + c1` east, `-1 - c1` west, `-1 + c2` north,
/// `-1 - c2` south. With `c1 = c2 = 0` the matrix equals the Laplace one
/// entry for entry.
pub fn build_convection_diffusion_2d(
    n: usize,
    c1: f64,
    c2: f64,
) -> Result<ProblemInstance, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameter { reason: "grid size must be positive".into() });
    }
    if !c1.is_finite() || !c2.is_finite() {
        return Err(ProblemError::InvalidParameter {
            reason: "convection parameters must be finite".into(),
        });
    }
    let dim = n * n;
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for iy in 0..n {
        for ix in 0..n {
            let p = iy * n + ix;
            // Columns in increasing order: south, west, center, east, north.
            if iy > 0 {
                col_idx.push(p - n);
                values.push(-1.0 - c2);
            }
            if ix > 0 {
                col_idx.push(p - 1);
                values.push(-1.0 - c1);
            }
            col_idx.push(p);
            values.push(4.0);
            if ix + 1 < n {
                col_idx.push(p + 1);
                values.push(-1.0 + c1);
            }
            if iy + 1 < n {
                col_idx.push(p + n);
                values.push(-1.0 + c2);
            }
            row_ptr.push(col_idx.len());
        }
    }
    let matrix = SparseMatrix::from_csr(dim, dim, row_ptr, col_idx, values)?;
    let label = if c1 == 0.0 && c2 == 0.0 {
        format!("convdiff_n{n}")
    } else {
        format!("convdiff_n{n}_c1_{c1}_c2_{c2}")
    };
    Ok(ProblemInstance { label, matrix, rhs: vec![1.0; dim], initial_guess: vec![0.0; dim] })
}

/// Lower-triangular part of `a`, diagonal included.
pub fn lower_triangular_part(a: &SparseMatrix) -> SparseMatrix {
    let mut triplets = Vec::new();
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= i {
                triplets.push((i, c, v));
            }
        }
    }
    SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), &triplets)
        .expect("filtering rows of a valid CSR matrix preserves validity")
}

/// Preconditioner `P` applied as `v -> P v`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preconditioner {
    Identity,
    ScaledIdentity { omega: f64 },
    /// `P = L^{-1}` for a lower-triangular `L`, applied by forward
    /// substitution. With `L` the lower-triangular part of `A` this is the
    /// Gauss-Seidel preconditioner.
    InverseLowerTriangular { l: SparseMatrix },
}

impl Preconditioner {
    pub fn identity() -> Self {
        Preconditioner::Identity
    }

    pub fn scaled_identity(omega: f64) -> Result<Self, ProblemError> {
        if omega == 0.0 || !omega.is_finite() {
            return Err(ProblemError::InvalidParameter {
                reason: "scaled identity requires a finite nonzero factor".into(),
            });
        }
        Ok(Preconditioner::ScaledIdentity { omega })
    }

    /// Validates up front that `l` is square, strictly lower triangular in
    /// structure, and carries a nonzero diagonal in every row.
    pub fn inverse_lower_triangular(l: SparseMatrix) -> Result<Self, ProblemError> {
        if l.n_rows() != l.n_cols() {
            return Err(ProblemError::InvalidParameter {
                reason: "triangular factor must be square".into(),
            });
        }
        for i in 0..l.n_rows() {
            let (cols, vals) = l.row(i);
            let mut diag = None;
            for (&c, &v) in cols.iter().zip(vals) {
                if c > i {
                    return Err(ProblemError::InvalidParameter {
                        reason: format!("entry above the diagonal at ({i}, {c})"),
                    });
                }
                if c == i {
                    diag = Some(v);
                }
            }
            if diag.map_or(true, |d| d == 0.0) {
                return Err(ProblemError::InvalidParameter {
                    reason: format!("zero or missing diagonal at row {i}"),
                });
            }
        }
        Ok(Preconditioner::InverseLowerTriangular { l })
    }

    /// Parses a textual preconditioner description: `identity`,
    /// `scaled:<omega>`, or `lower-tri` / `lower_tri` (the inverse of the
    /// lower-triangular part of `a`, i.e. Gauss-Seidel).
    pub fn from_spec(spec: &str, a: &SparseMatrix) -> Result<Self, ProblemError> {
        let t = spec.trim().to_ascii_lowercase();
        match t.as_str() {
            "identity" => Ok(Preconditioner::identity()),
            "lower-tri" | "lower_tri" => {
                Preconditioner::inverse_lower_triangular(lower_triangular_part(a))
            }
            other => match other.strip_prefix("scaled:") {
                Some(omega) => {
                    let omega =
                        omega.parse::<f64>().map_err(|_| ProblemError::InvalidParameter {
                            reason: format!("invalid scaling factor '{omega}'"),
                        })?;
                    Preconditioner::scaled_identity(omega)
                }
                None => Err(ProblemError::InvalidParameter {
                    reason: format!(
                        "unknown preconditioner '{other}' (expected 'identity', \
                         'scaled:<omega>', or 'lower-tri')"
                    ),
                }),
            },
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vector, ProblemError> {
        match self {
            Preconditioner::Identity => Ok(v.to_vec()),
            Preconditioner::ScaledIdentity { omega } => Ok(v.iter().map(|x| omega * x).collect()),
            Preconditioner::InverseLowerTriangular { l } => {
                Ok(forward_substitution(l, v)?)
            }
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        match self {
            Preconditioner::InverseLowerTriangular { l } => Some(l.n_rows()),
            _ => None,
        }
    }
}

/// Writes `a` in MatrixMarket coordinate format (ASCII, 1-based indices).
pub fn write_matrix_market<W: Write>(a: &SparseMatrix, out: &mut W) -> io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            writeln!(out, "{} {} {:.17e}", i + 1, c + 1, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_1x1_is_scalar_four() {
        let p = build_laplace_2d(1).unwrap();
        assert_eq!(p.n(), 1);
        assert_eq!(p.matrix.row(0), (&[0usize][..], &[4.0][..]));
        assert_eq!(p.rhs, vec![1.0]);
        assert_eq!(p.initial_guess, vec![0.0]);
    }

    #[test]
    fn laplace_2x2_rows() {
        let p = build_laplace_2d(2).unwrap();
        let d = p.matrix.to_dense();
        let expected = [
            [4.0, -1.0, -1.0, 0.0],
            [-1.0, 4.0, 0.0, -1.0],
            [-1.0, 0.0, 4.0, -1.0],
            [0.0, -1.0, -1.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), expected[i][j], "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn laplace_is_bitwise_symmetric() {
        let p = build_laplace_2d(16).unwrap();
        assert_eq!(p.matrix.transpose(), p.matrix);
    }

    #[test]
    fn laplace_row_counts_and_diagonal() {
        let p = build_laplace_2d(5).unwrap();
        for i in 0..p.n() {
            let (cols, vals) = p.matrix.row(i);
            assert!((1..=5).contains(&cols.len()));
            let diag_pos = cols.iter().position(|&c| c == i).expect("diagonal present");
            assert_eq!(vals[diag_pos], 4.0);
        }
    }

    #[test]
    fn convection_diffusion_2x2_rows() {
        let p = build_convection_diffusion_2d(2, 0.5, 0.5).unwrap();
        let d = p.matrix.to_dense();
        let expected = [
            [4.0, -0.5, -0.5, 0.0],
            [-1.5, 4.0, 0.0, -0.5],
            [-1.5, 0.0, 4.0, -0.5],
            [0.0, -1.5, -1.5, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), expected[i][j], "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn convection_diffusion_zero_c_equals_laplace() {
        let lap = build_laplace_2d(8).unwrap();
        let cd = build_convection_diffusion_2d(8, 0.0, 0.0).unwrap();
        assert_eq!(lap.matrix, cd.matrix);
    }

    #[test]
    fn convection_diffusion_is_nonsymmetric() {
        let p = build_convection_diffusion_2d(8, 0.5, 0.5).unwrap();
        assert_ne!(p.matrix.transpose(), p.matrix);
    }

    #[test]
    fn builders_reject_bad_parameters() {
        assert!(build_laplace_2d(0).is_err());
        assert!(build_convection_diffusion_2d(4, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn lower_triangular_partition() {
        let p = build_laplace_2d(3).unwrap();
        let l = lower_triangular_part(&p.matrix);
        for i in 0..l.n_rows() {
            let (cols, _) = l.row(i);
            assert!(cols.iter().all(|&c| c <= i));
        }
        // L plus the strictly upper part reassembles A.
        let mut triplets = Vec::new();
        for i in 0..p.matrix.n_rows() {
            let (cols, vals) = p.matrix.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c > i {
                    triplets.push((i, c, v));
                }
            }
        }
        for i in 0..l.n_rows() {
            let (cols, vals) = l.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((i, c, v));
            }
        }
        let reassembled =
            SparseMatrix::from_triplets(p.matrix.n_rows(), p.matrix.n_cols(), &triplets).unwrap();
        assert_eq!(reassembled, p.matrix);
    }

    #[test]
    fn preconditioner_applications() {
        let id = Preconditioner::identity();
        assert_eq!(id.apply(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);

        let scaled = Preconditioner::scaled_identity(0.125).unwrap();
        assert_eq!(scaled.apply(&[8.0, -16.0]).unwrap(), vec![1.0, -2.0]);

        let l = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let inv = Preconditioner::inverse_lower_triangular(l).unwrap();
        assert_eq!(inv.apply(&[2.0, 3.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn preconditioner_validation() {
        assert!(Preconditioner::scaled_identity(0.0).is_err());
        assert!(Preconditioner::scaled_identity(f64::INFINITY).is_err());

        let upper = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(Preconditioner::inverse_lower_triangular(upper).is_err());

        let zero_diag = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(Preconditioner::inverse_lower_triangular(zero_diag).is_err());
    }

    #[test]
    fn matrix_market_export_golden() {
        let p = build_laplace_2d(1).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&p.matrix, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 4.00000000000000000e0\n"
        );

        let p = build_laplace_2d(2).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&p.matrix, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines[1], "4 4 12");
        assert_eq!(lines.len(), 2 + 12);
        assert!(lines[2].starts_with("1 1 "));
    }
}
