//! Reference left- and right-preconditioned GMRES without restarting.
//!
//! Right preconditioning runs Arnoldi on `v -> A (P v)` from the classical
//! residual `A x_0 - b` and materializes `x_k = x_0 - P c_k`; left
//! preconditioning runs Arnoldi on `v -> P (A v)` from the preconditioned
//! residual and sets `x_k = x_0 - c_k`. In both cases `c_k` minimizes the
//! residual of the starting flavor over the Krylov space, computed through
//! Givens rotations on the Hessenberg matrix. Iterates are materialized
//! every iteration so the trace always carries both true residual norms.

use crate::fixed_point::{validate_options, RichardsonOperator, SolveError};
use crate::linalg::{axpy, dot, norm2, Vector};
use crate::trace::{
    IterationVectors, MethodKind, SolveOptions, SolveReport, SolveStatus, StepRecord,
};

/// Arnoldi is declared broken down (lucky: the solution lies in the current
/// Krylov space) when the new basis vector's norm falls below this factor
/// times the starting residual norm.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// A second modified-Gram-Schmidt pass runs when orthogonalization removed
/// more than this fraction of the vector's norm.
const REORTH_TRIGGER: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GmresSide {
    Left,
    Right,
}

/// Arnoldi basis and raw (unrotated) Hessenberg columns, built by modified
/// Gram-Schmidt with one conditional re-orthogonalization pass.
#[derive(Clone, Debug)]
pub struct ArnoldiState {
    basis: Vec<Vector>,
    hessenberg: Vec<Vector>,
}

impl ArnoldiState {
    /// Starts from an unnormalized residual; `None` when it is zero.
    pub fn new(r0: &[f64]) -> Option<Self> {
        let beta = norm2(r0);
        if beta == 0.0 {
            return None;
        }
        let v0 = r0.iter().map(|x| x / beta).collect();
        Some(ArnoldiState { basis: vec![v0], hessenberg: vec![] })
    }

    /// Completed Arnoldi steps.
    pub fn dimension(&self) -> usize {
        self.hessenberg.len()
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    /// Hessenberg column `j`, carrying `j + 2` entries (subdiagonal last).
    pub fn hessenberg_column(&self, j: usize) -> &[f64] {
        &self.hessenberg[j]
    }

    /// Orthogonalizes `w` (the operator applied to the newest basis vector)
    /// against the basis and appends it. Returns true on lucky breakdown,
    /// in which case no basis vector is appended.
    pub fn extend(&mut self, mut w: Vector, breakdown_threshold: f64) -> Result<bool, SolveError> {
        let norm_before = norm2(&w);
        let mut hcol = Vec::with_capacity(self.basis.len() + 1);
        for v in &self.basis {
            let h = dot(v, &w)?;
            axpy(-h, v, &mut w)?;
            hcol.push(h);
        }
        let mut norm_after = norm2(&w);
        if norm_after < REORTH_TRIGGER * norm_before {
            for (i, v) in self.basis.iter().enumerate() {
                let c = dot(v, &w)?;
                axpy(-c, v, &mut w)?;
                hcol[i] += c;
            }
            norm_after = norm2(&w);
        }
        hcol.push(norm_after);
        self.hessenberg.push(hcol);
        let lucky = norm_after < breakdown_threshold;
        if !lucky {
            for x in w.iter_mut() {
                *x /= norm_after;
            }
            self.basis.push(w);
        }
        Ok(lucky)
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    let r = a.hypot(b);
    if r == 0.0 {
        (1.0, 0.0)
    } else {
        (a / r, b / r)
    }
}

/// Full-memory preconditioned GMRES. Stops once the side-appropriate true
/// residual (classical for right, preconditioned for left) satisfies
/// `||res_k|| <= tol * ||res_0||`.
pub fn gmres_preconditioned(
    op: &RichardsonOperator,
    side: GmresSide,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    validate_options(opts)?;
    let kind = MethodKind::Gmres { side };
    let x0 = op.problem().initial_guess.clone();
    let e0 = op.eval(&x0)?;
    let res0 = match side {
        GmresSide::Right => e0.r_classical.clone(),
        GmresSide::Left => e0.r_preconditioned.clone(),
    };
    let beta = norm2(&res0);

    let mut trace = vec![StepRecord {
        k: 0,
        classical_norm: norm2(&e0.r_classical),
        preconditioned_norm: norm2(&e0.r_preconditioned),
        window_len: 0,
        coefficients: vec![],
        lsq_rank: 0,
        lsq_residual_norm: beta,
    }];
    let mut vectors = opts.retain_vectors.then(|| {
        vec![IterationVectors {
            x: x0.clone(),
            qx: None,
            r_preconditioned: e0.r_preconditioned.clone(),
            r_classical: e0.r_classical.clone(),
            design_extra: None,
            lsq_residual: None,
        }]
    });

    if !beta.is_finite() {
        return Err(SolveError::Diverged {
            report: Box::new(SolveReport {
                kind,
                status: SolveStatus::Diverged,
                final_x: x0,
                trace,
                vectors,
            }),
        });
    }
    if beta == 0.0 {
        return Ok(SolveReport {
            kind,
            status: SolveStatus::Converged,
            final_x: x0,
            trace,
            vectors,
        });
    }

    let mut arnoldi = ArnoldiState::new(&res0).expect("nonzero starting residual");
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut r_cols: Vec<Vector> = Vec::new();
    let mut g = vec![beta];
    let mut x = x0.clone();
    let status;

    loop {
        let j = arnoldi.dimension();
        if j == opts.maxit {
            status = SolveStatus::MaxIterations;
            break;
        }
        let vj = arnoldi.basis().last().expect("basis is never empty");
        let w = match side {
            GmresSide::Right => op.apply_ap(vj)?,
            GmresSide::Left => op.apply_pa(vj)?,
        };
        let lucky = arnoldi.extend(w, BREAKDOWN_TOL * beta)?;

        // Rotate the new Hessenberg column into triangular form.
        let mut hcol = arnoldi.hessenberg_column(j).to_vec();
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let t0 = c * hcol[i] + s * hcol[i + 1];
            let t1 = -s * hcol[i] + c * hcol[i + 1];
            hcol[i] = t0;
            hcol[i + 1] = t1;
        }
        let (c, s) = givens(hcol[j], hcol[j + 1]);
        hcol[j] = c * hcol[j] + s * hcol[j + 1];
        rotations.push((c, s));
        r_cols.push(hcol[..=j].to_vec());
        let g_next = -s * g[j];
        g[j] *= c;
        g.push(g_next);

        // Minimizer over the current space and the materialized iterate.
        let mut y: Vector = g[..=j].to_vec();
        for i in (0..=j).rev() {
            for col in i + 1..=j {
                y[i] -= r_cols[col][i] * y[col];
            }
            y[i] /= r_cols[i][i];
        }
        let n = op.n();
        let mut corr = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &arnoldi.basis()[i], &mut corr)?;
        }
        x = match side {
            GmresSide::Right => {
                let pc = op.preconditioner().apply(&corr)?;
                x0.iter().zip(&pc).map(|(a, b)| a - b).collect()
            }
            GmresSide::Left => x0.iter().zip(&corr).map(|(a, b)| a - b).collect(),
        };

        let e = op.eval(&x)?;
        let classical_norm = norm2(&e.r_classical);
        let preconditioned_norm = norm2(&e.r_preconditioned);
        trace.push(StepRecord {
            k: j + 1,
            classical_norm,
            preconditioned_norm,
            window_len: 0,
            coefficients: vec![],
            lsq_rank: j + 1,
            lsq_residual_norm: g[j + 1].abs(),
        });
        if let Some(v) = vectors.as_mut() {
            v.push(IterationVectors {
                x: x.clone(),
                qx: None,
                r_preconditioned: e.r_preconditioned.clone(),
                r_classical: e.r_classical.clone(),
                design_extra: None,
                lsq_residual: None,
            });
        }
        if !classical_norm.is_finite() || !preconditioned_norm.is_finite() {
            return Err(SolveError::Diverged {
                report: Box::new(SolveReport {
                    kind,
                    status: SolveStatus::Diverged,
                    final_x: x,
                    trace,
                    vectors,
                }),
            });
        }
        let true_norm = match side {
            GmresSide::Right => classical_norm,
            GmresSide::Left => preconditioned_norm,
        };
        if true_norm <= opts.tol * beta {
            status = SolveStatus::Converged;
            break;
        }
        if lucky {
            status = SolveStatus::Breakdown;
            break;
        }
    }

    Ok(SolveReport { kind, status, final_x: x, trace, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_solve, SparseMatrix};
    use crate::problems::{
        build_laplace_2d, lower_triangular_part, Preconditioner, ProblemInstance,
    };
    use crate::trace::NormKind;

    fn gauss_seidel_op(n: usize) -> RichardsonOperator {
        let p = build_laplace_2d(n).unwrap();
        let prec =
            Preconditioner::inverse_lower_triangular(lower_triangular_part(&p.matrix)).unwrap();
        RichardsonOperator::new(p, prec).unwrap()
    }

    #[test]
    fn identity_system_converges_in_one_step() {
        let matrix =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let problem = ProblemInstance {
            label: "identity".into(),
            matrix,
            rhs: vec![3.0, -4.0],
            initial_guess: vec![0.0, 0.0],
        };
        let op = RichardsonOperator::new(problem, Preconditioner::identity()).unwrap();
        for side in [GmresSide::Left, GmresSide::Right] {
            let r = gmres_preconditioned(&op, side, &SolveOptions::default()).unwrap();
            assert_eq!(r.iterations(), 1);
            assert!((r.final_x[0] - 3.0).abs() < 1e-14);
            assert!((r.final_x[1] + 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_initial_guess_stops_immediately() {
        let p = build_laplace_2d(3).unwrap();
        let ones = vec![1.0; p.n()];
        let rhs = p.matrix.spmv(&ones).unwrap();
        let problem = ProblemInstance { rhs, initial_guess: ones, ..p };
        let op = RichardsonOperator::new(problem, Preconditioner::identity()).unwrap();
        for side in [GmresSide::Left, GmresSide::Right] {
            let r = gmres_preconditioned(&op, side, &SolveOptions::default()).unwrap();
            assert_eq!(r.iterations(), 0);
            assert_eq!(r.status, SolveStatus::Converged);
        }
    }

    #[test]
    fn matches_dense_solve_on_small_laplace() {
        let op = gauss_seidel_op(8);
        let dense = op.problem().matrix.to_dense();
        let reference = dense_solve(&dense, &op.problem().rhs).unwrap();
        let opts = SolveOptions { tol: 1e-12, maxit: 500, ..Default::default() };
        for side in [GmresSide::Left, GmresSide::Right] {
            let r = gmres_preconditioned(&op, side, &opts).unwrap();
            assert!(r.is_converged());
            let scale = crate::linalg::norm2(&reference);
            let diff: f64 = r
                .final_x
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-8 * scale.max(1.0), "side {side:?}: gap {diff}");
        }
    }

    #[test]
    fn primary_norms_never_increase() {
        let op = gauss_seidel_op(8);
        let opts = SolveOptions { tol: 1e-10, maxit: 200, ..Default::default() };
        for side in [GmresSide::Left, GmresSide::Right] {
            let r = gmres_preconditioned(&op, side, &opts).unwrap();
            let norms = r.primary_norms();
            for k in 1..norms.len() {
                assert!(
                    norms[k] <= norms[k - 1] * (1.0 + 1e-13),
                    "optimality violated at step {k}"
                );
            }
        }
    }

    #[test]
    fn hessenberg_estimate_tracks_true_residual() {
        let op = gauss_seidel_op(6);
        let opts = SolveOptions { tol: 1e-10, maxit: 200, ..Default::default() };
        for side in [GmresSide::Left, GmresSide::Right] {
            let r = gmres_preconditioned(&op, side, &opts).unwrap();
            let kind = match side {
                GmresSide::Right => NormKind::Classical,
                GmresSide::Left => NormKind::Preconditioned,
            };
            let beta = r.trace[0].norm(kind);
            for rec in &r.trace {
                let true_norm = rec.norm(kind);
                assert!(
                    (rec.lsq_residual_norm - true_norm).abs()
                        <= 1e-8 * true_norm + 1e-13 * beta,
                    "estimate {} vs true {} at k = {}",
                    rec.lsq_residual_norm,
                    true_norm,
                    rec.k
                );
            }
        }
    }

    #[test]
    fn arnoldi_basis_stays_orthonormal() {
        let op = gauss_seidel_op(6);
        let e0 = op.eval(&op.problem().initial_guess).unwrap();
        let mut st = ArnoldiState::new(&e0.r_classical).unwrap();
        for _ in 0..30 {
            let v = st.basis().last().unwrap().clone();
            let w = op.apply_ap(&v).unwrap();
            if st.extend(w, 1e-14).unwrap() {
                break;
            }
        }
        let basis = st.basis();
        for i in 0..basis.len() {
            for j in 0..=i {
                let d = dot(&basis[i], &basis[j]).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (d - expected).abs() <= 1e-12,
                    "basis inner product ({i}, {j}) = {d}"
                );
            }
        }
    }

    #[test]
    fn zero_rhs_is_degenerate_breakdown_free() {
        let p = build_laplace_2d(2).unwrap();
        let problem = ProblemInstance { rhs: vec![0.0; 4], ..p };
        let op = RichardsonOperator::new(problem, Preconditioner::identity()).unwrap();
        let r = gmres_preconditioned(&op, GmresSide::Right, &SolveOptions::default()).unwrap();
        assert_eq!(r.iterations(), 0);
        assert_eq!(r.status, SolveStatus::Converged);
    }
}
