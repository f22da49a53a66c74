//! Solve options, per-iteration records, and reports shared by the
//! Richardson, accelerated, and GMRES drivers.

use crate::accel::{AcceleratorVariant, WindowDepth};
use crate::gmres::GmresSide;
use crate::linalg::Vector;

/// Residual flavor: `classical` is `A x - b`, `preconditioned` is
/// `P (A x - b) = x - q(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Classical,
    Preconditioned,
}

/// Identifies which driver produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    Richardson,
    Accelerated { variant: AcceleratorVariant, depth: WindowDepth },
    Gmres { side: GmresSide },
}

impl MethodKind {
    /// Stable label used in file names and summaries, e.g. `aa_m5`,
    /// `ngmres_full`, `gmres_right`, `richardson`.
    pub fn label(&self) -> String {
        match self {
            MethodKind::Richardson => "richardson".into(),
            MethodKind::Accelerated { variant, depth } => {
                format!("{}_{}", variant.name(), depth.label())
            }
            MethodKind::Gmres { side } => match side {
                GmresSide::Left => "gmres_left".into(),
                GmresSide::Right => "gmres_right".into(),
            },
        }
    }

    /// The residual flavor whose norm the method's theory controls: the
    /// classical residual for NGMRES, AAg, and right-preconditioned GMRES;
    /// the preconditioned residual otherwise.
    pub fn norm_kind(&self) -> NormKind {
        match self {
            MethodKind::Richardson => NormKind::Preconditioned,
            MethodKind::Accelerated { variant, .. } => match variant {
                AcceleratorVariant::Aag | AcceleratorVariant::Ngmres => NormKind::Classical,
                _ => NormKind::Preconditioned,
            },
            MethodKind::Gmres { side } => match side {
                GmresSide::Right => NormKind::Classical,
                GmresSide::Left => NormKind::Preconditioned,
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Relative tolerance on the stopping residual: iteration ends once
    /// `||r_k|| <= tol * ||r_0||`.
    pub tol: f64,
    /// Maximum number of iterations (steps past the initial guess).
    pub maxit: usize,
    /// Retain per-iteration vectors so diagnostics can replay the run.
    pub retain_vectors: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, maxit: 500, retain_vectors: false }
    }
}

impl SolveOptions {
    pub fn with_retention(mut self) -> Self {
        self.retain_vectors = true;
        self
    }
}

/// Scalar record for one iterate. The least-squares fields describe the
/// subproblem solved *at* iteration `k` to produce iterate `k + 1`;
/// records that took no step (the final iterate, plain Richardson, GMRES)
/// have empty `coefficients` and a NaN `lsq_residual_norm`, except that
/// GMRES stores its Hessenberg residual estimate there.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub k: usize,
    pub classical_norm: f64,
    pub preconditioned_norm: f64,
    /// Window span `m_k` used at this step (accelerated methods only).
    pub window_len: usize,
    pub coefficients: Vector,
    pub lsq_rank: usize,
    pub lsq_residual_norm: f64,
}

impl StepRecord {
    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Classical => self.classical_norm,
            NormKind::Preconditioned => self.preconditioned_norm,
        }
    }
}

/// Per-iteration vectors retained on request (`SolveOptions::retain_vectors`).
/// Entry `k` is aligned with `trace[k]`.
#[derive(Clone, Debug)]
pub struct IterationVectors {
    pub x: Vector,
    /// `q(x_k)`; absent for GMRES, which never evaluates the fixed-point map.
    pub qx: Option<Vector>,
    pub r_preconditioned: Vector,
    pub r_classical: Vector,
    /// The `q`-image residual entering the step's subproblem as its
    /// right-hand side: `A q(x_k) - b` for `aag`/`ngmres`,
    /// `P (A q(x_k) - b)` for `aar`/`ngmresr`. Absent for `aa`, plain
    /// Richardson, GMRES, and (for the NGMRES pair only) the final record.
    pub design_extra: Option<Vector>,
    /// Residual vector of the least-squares subproblem solved at this step.
    pub lsq_residual: Option<Vector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// GMRES hit an Arnoldi breakdown, meaning the exact solution lies in
    /// the current Krylov space; treated as converged.
    Breakdown,
    /// Only appears in the partial report attached to a divergence error.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub kind: MethodKind,
    pub status: SolveStatus,
    pub final_x: Vector,
    pub trace: Vec<StepRecord>,
    pub vectors: Option<Vec<IterationVectors>>,
}

impl SolveReport {
    /// Index of the final iterate (number of steps taken).
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn is_converged(&self) -> bool {
        matches!(self.status, SolveStatus::Converged | SolveStatus::Breakdown)
    }

    pub fn norms(&self, kind: NormKind) -> Vec<f64> {
        self.trace.iter().map(|r| r.norm(kind)).collect()
    }

    /// Norm history in the method's own residual flavor.
    pub fn primary_norms(&self) -> Vec<f64> {
        self.norms(self.kind.norm_kind())
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }
}

/// True when the report's primary residual norms strictly decrease through
/// iterate `upto` (clamped to the trace length).
pub fn residual_history_strictly_decreasing(report: &SolveReport, upto: usize) -> bool {
    let norms = report.primary_norms();
    let end = upto.min(norms.len().saturating_sub(1));
    (1..=end).all(|k| norms[k] < norms[k - 1])
}

/// Largest index `K` such that the primary norms strictly decrease at every
/// step up to `K`; 0 when the very first step already fails to decrease.
pub fn strictly_decreasing_prefix(report: &SolveReport) -> usize {
    let norms = report.primary_norms();
    let mut k = 0;
    while k + 1 < norms.len() && norms[k + 1] < norms[k] {
        k += 1;
    }
    k
}
