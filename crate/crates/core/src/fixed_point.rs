//! The preconditioned Richardson fixed-point map `q(x) = x + P (b - A x)`,
//! its residuals, and the unaccelerated Richardson driver.
//!
//! Both residual flavors fall out of one evaluation: with `t = A x` the
//! classical residual is `t - b`, the preconditioned residual is
//! `r = P (t - b)`, and `q(x) = x - r`. The iteration matrices
//! `B = I - P A` and `H = I - A P` are never formed here; they are applied
//! operatorially for diagnostics.

use std::fmt;

use crate::linalg::{norm2, LinalgError, Vector};
use crate::problems::{Preconditioner, ProblemError, ProblemInstance};
use crate::trace::{
    IterationVectors, MethodKind, SolveOptions, SolveReport, SolveStatus, StepRecord,
};

#[derive(Debug)]
pub enum SolveError {
    Parameter { reason: String },
    Problem(ProblemError),
    Linalg(LinalgError),
    /// The iteration produced a non-finite residual; the partial trace up
    /// to and including the offending iterate is attached.
    Diverged { report: Box<SolveReport> },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Parameter { reason } => write!(f, "invalid solver parameter: {reason}"),
            SolveError::Problem(e) => write!(f, "{e}"),
            SolveError::Linalg(e) => write!(f, "{e}"),
            SolveError::Diverged { report } => {
                write!(f, "iteration diverged after {} steps", report.iterations())
            }
        }
    }
}

impl std::error::Error for SolveError {}

impl From<ProblemError> for SolveError {
    fn from(e: ProblemError) -> Self {
        SolveError::Problem(e)
    }
}

impl From<LinalgError> for SolveError {
    fn from(e: LinalgError) -> Self {
        SolveError::Linalg(e)
    }
}

/// Both residual flavors at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub classical: Vector,
    pub preconditioned: Vector,
}

/// One evaluation of the fixed-point map: `q(x)` together with the
/// residuals at `x`. Satisfies `preconditioned = x - qx` exactly by
/// construction.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub qx: Vector,
    pub r_classical: Vector,
    pub r_preconditioned: Vector,
}

/// The map `q` for one problem/preconditioner pair, dimension-checked at
/// construction.
#[derive(Debug, Clone)]
pub struct RichardsonOperator {
    problem: ProblemInstance,
    preconditioner: Preconditioner,
}

impl RichardsonOperator {
    pub fn new(
        problem: ProblemInstance,
        preconditioner: Preconditioner,
    ) -> Result<Self, SolveError> {
        let n = problem.matrix.n_rows();
        if problem.matrix.n_cols() != n {
            return Err(SolveError::Parameter { reason: "matrix must be square".into() });
        }
        if problem.rhs.len() != n || problem.initial_guess.len() != n {
            return Err(SolveError::Parameter {
                reason: "right-hand side and initial guess must match the matrix dimension".into(),
            });
        }
        if let Some(pn) = preconditioner.dimension() {
            if pn != n {
                return Err(SolveError::Parameter {
                    reason: format!("preconditioner dimension {pn} does not match {n}"),
                });
            }
        }
        Ok(RichardsonOperator { problem, preconditioner })
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn problem(&self) -> &ProblemInstance {
        &self.problem
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        &self.preconditioner
    }

    /// Evaluates `q(x)` and both residuals with one matrix-vector product
    /// and one preconditioner application.
    pub fn eval(&self, x: &[f64]) -> Result<PointEval, SolveError> {
        let mut r_classical = self.problem.matrix.spmv(x).map_err(ProblemError::from)?;
        for (t, b) in r_classical.iter_mut().zip(&self.problem.rhs) {
            *t -= b;
        }
        let r_preconditioned = self.preconditioner.apply(&r_classical)?;
        let qx = x.iter().zip(&r_preconditioned).map(|(xi, ri)| xi - ri).collect();
        Ok(PointEval { qx, r_classical, r_preconditioned })
    }

    /// `q(x) = x + P (b - A x)`.
    pub fn q_apply(&self, x: &[f64]) -> Result<Vector, SolveError> {
        Ok(self.eval(x)?.qx)
    }

    pub fn residuals(&self, x: &[f64]) -> Result<ResidualPair, SolveError> {
        let e = self.eval(x)?;
        Ok(ResidualPair { classical: e.r_classical, preconditioned: e.r_preconditioned })
    }

    /// `A x - b` alone (no preconditioner application).
    pub fn classical_residual(&self, x: &[f64]) -> Result<Vector, SolveError> {
        let mut t = self.problem.matrix.spmv(x).map_err(ProblemError::from)?;
        for (ti, b) in t.iter_mut().zip(&self.problem.rhs) {
            *ti -= b;
        }
        Ok(t)
    }

    /// `P (A v)`.
    pub fn apply_pa(&self, v: &[f64]) -> Result<Vector, SolveError> {
        let t = self.problem.matrix.spmv(v).map_err(ProblemError::from)?;
        Ok(self.preconditioner.apply(&t)?)
    }

    /// `A (P v)`.
    pub fn apply_ap(&self, v: &[f64]) -> Result<Vector, SolveError> {
        let t = self.preconditioner.apply(v)?;
        Ok(self.problem.matrix.spmv(&t).map_err(ProblemError::from)?)
    }

    /// `B v = (I - P A) v`.
    pub fn apply_b(&self, v: &[f64]) -> Result<Vector, SolveError> {
        let t = self.apply_pa(v)?;
        Ok(v.iter().zip(&t).map(|(vi, ti)| vi - ti).collect())
    }

    /// `H v = (I - A P) v`.
    pub fn apply_h(&self, v: &[f64]) -> Result<Vector, SolveError> {
        let t = self.apply_ap(v)?;
        Ok(v.iter().zip(&t).map(|(vi, ti)| vi - ti).collect())
    }
}

pub(crate) fn validate_options(opts: &SolveOptions) -> Result<(), SolveError> {
    if !(opts.tol > 0.0) || !opts.tol.is_finite() {
        return Err(SolveError::Parameter { reason: "tol must be positive and finite".into() });
    }
    if opts.maxit == 0 {
        return Err(SolveError::Parameter { reason: "maxit must be at least 1".into() });
    }
    Ok(())
}

/// Plain Richardson iteration `x_{k+1} = q(x_k)`, stopping once the
/// preconditioned residual satisfies `||r_k|| <= tol * ||r_0||`.
pub fn run_richardson(
    op: &RichardsonOperator,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    validate_options(opts)?;
    let mut x = op.problem().initial_guess.clone();
    let mut e = op.eval(&x)?;
    let r0 = norm2(&e.r_preconditioned);

    let mut trace = Vec::new();
    let mut vectors = opts.retain_vectors.then(Vec::new);
    let status;
    let mut k = 0;
    loop {
        let classical_norm = norm2(&e.r_classical);
        let preconditioned_norm = norm2(&e.r_preconditioned);
        trace.push(StepRecord {
            k,
            classical_norm,
            preconditioned_norm,
            window_len: 0,
            coefficients: vec![],
            lsq_rank: 0,
            lsq_residual_norm: f64::NAN,
        });
        if let Some(v) = vectors.as_mut() {
            v.push(IterationVectors {
                x: x.clone(),
                qx: Some(e.qx.clone()),
                r_preconditioned: e.r_preconditioned.clone(),
                r_classical: e.r_classical.clone(),
                design_extra: None,
                lsq_residual: None,
            });
        }
        if !classical_norm.is_finite() || !preconditioned_norm.is_finite() {
            return Err(SolveError::Diverged {
                report: Box::new(SolveReport {
                    kind: MethodKind::Richardson,
                    status: SolveStatus::Diverged,
                    final_x: x,
                    trace,
                    vectors,
                }),
            });
        }
        if preconditioned_norm <= opts.tol * r0 {
            status = SolveStatus::Converged;
            break;
        }
        if k == opts.maxit {
            status = SolveStatus::MaxIterations;
            break;
        }
        x = e.qx.clone();
        e = op.eval(&x)?;
        k += 1;
    }

    Ok(SolveReport { kind: MethodKind::Richardson, status, final_x: x, trace, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_laplace_2d, lower_triangular_part};
    use crate::trace::NormKind;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gauss_seidel_op(n: usize) -> RichardsonOperator {
        let p = build_laplace_2d(n).unwrap();
        let prec =
            Preconditioner::inverse_lower_triangular(lower_triangular_part(&p.matrix)).unwrap();
        RichardsonOperator::new(p, prec).unwrap()
    }

    #[test]
    fn eval_identities_hold() {
        let op = gauss_seidel_op(4);
        let x: Vector = (0..op.n()).map(|i| (i as f64) * 0.1 - 0.5).collect();
        let e = op.eval(&x).unwrap();
        // qx = x - r_preconditioned holds bitwise by construction.
        for ((xi, qi), ri) in x.iter().zip(&e.qx).zip(&e.r_preconditioned) {
            assert_eq!(*qi, xi - ri);
        }
        // The pair is consistent with applying P to the classical residual.
        let pair = op.residuals(&x).unwrap();
        let applied = op.preconditioner().apply(&pair.classical).unwrap();
        for (a, b) in applied.iter().zip(&pair.preconditioned) {
            assert_eq!(a, b);
        }
        assert_eq!(op.q_apply(&x).unwrap(), e.qx);
    }

    #[test]
    fn q_from_zero_is_preconditioned_rhs() {
        let op = gauss_seidel_op(4);
        let q0 = op.q_apply(&vec![0.0; op.n()]).unwrap();
        let pb = op.preconditioner().apply(op.problem().rhs.as_slice()).unwrap();
        assert_eq!(q0, pb);
    }

    #[test]
    fn exact_fixed_point_is_stationary() {
        // b := A * ones makes x = ones an exact fixed point in floating
        // point, since the same spmv is recomputed bitwise.
        let p = build_laplace_2d(4).unwrap();
        let ones = vec![1.0; p.n()];
        let rhs = p.matrix.spmv(&ones).unwrap();
        let problem = ProblemInstance { rhs, initial_guess: ones.clone(), ..p };
        let prec =
            Preconditioner::inverse_lower_triangular(lower_triangular_part(&problem.matrix))
                .unwrap();
        let op = RichardsonOperator::new(problem, prec).unwrap();
        assert_eq!(op.q_apply(&ones).unwrap(), ones);

        let report = run_richardson(&op, &SolveOptions::default()).unwrap();
        assert_eq!(report.iterations(), 0);
        assert_eq!(report.status, SolveStatus::Converged);
    }

    #[test]
    fn affine_map_identity() {
        // q(x) - q(y) = B (x - y) for the affine fixed-point map.
        let op = gauss_seidel_op(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x: Vector = (0..op.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vector = (0..op.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lhs: Vector = op
                .q_apply(&x)
                .unwrap()
                .iter()
                .zip(op.q_apply(&y).unwrap())
                .map(|(a, b)| a - b)
                .collect();
            let d: Vector = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let rhs = op.apply_b(&d).unwrap();
            for (l, r) in lhs.iter().zip(&rhs) {
                assert_relative_eq!(l, r, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn identity_system_converges_in_one_step() {
        let matrix = crate::linalg::SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        let problem = ProblemInstance {
            label: "identity".into(),
            matrix,
            rhs: vec![3.0, -4.0],
            initial_guess: vec![0.0, 0.0],
        };
        let op = RichardsonOperator::new(problem, Preconditioner::identity()).unwrap();
        let report = run_richardson(&op, &SolveOptions::default()).unwrap();
        assert_eq!(report.iterations(), 1);
        assert_eq!(report.final_x, vec![3.0, -4.0]);
        assert_eq!(report.status, SolveStatus::Converged);
    }

    #[test]
    fn gauss_seidel_richardson_monotone_on_laplace() {
        let op = gauss_seidel_op(16);
        let opts = SolveOptions { tol: 1e-6, maxit: 2000, ..Default::default() };
        let report = run_richardson(&op, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let norms = report.norms(NormKind::Preconditioned);
        for k in 1..norms.len() {
            assert!(norms[k] < norms[k - 1], "residual rose at step {k}");
        }
    }

    #[test]
    fn rejects_bad_options_and_shapes() {
        let op = gauss_seidel_op(2);
        let bad_tol = SolveOptions { tol: 0.0, ..Default::default() };
        assert!(matches!(run_richardson(&op, &bad_tol), Err(SolveError::Parameter { .. })));
        let bad_maxit = SolveOptions { maxit: 0, ..Default::default() };
        assert!(matches!(run_richardson(&op, &bad_maxit), Err(SolveError::Parameter { .. })));
        assert!(op.q_apply(&[1.0]).is_err());

        let p = build_laplace_2d(2).unwrap();
        let short = ProblemInstance { rhs: vec![1.0], ..p };
        assert!(RichardsonOperator::new(short, Preconditioner::identity()).is_err());
    }

    #[test]
    fn divergent_iteration_reports_partial_trace() {
        // P = -4 I on the 1x1 system 4x = 1 gives B = I - PA = 17 I, a
        // violently divergent map that overflows quickly.
        let p = build_laplace_2d(1).unwrap();
        let op =
            RichardsonOperator::new(p, Preconditioner::scaled_identity(-4.0).unwrap()).unwrap();
        let opts = SolveOptions { tol: 1e-10, maxit: 500, ..Default::default() };
        match run_richardson(&op, &opts) {
            Err(SolveError::Diverged { report }) => {
                assert!(report.trace.len() > 1);
                assert_eq!(report.status, SolveStatus::Diverged);
                let last = report.trace.last().unwrap();
                assert!(!last.preconditioned_norm.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
