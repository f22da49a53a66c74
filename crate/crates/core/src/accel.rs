//! Windowed acceleration of the Richardson iteration.
//!
//! All five variants keep a window of the `m_k + 1 = min(k, m) + 1` most
//! recent iterates and combine their `q`-images through a small least-squares
//! problem, differing only in which residual flavor that problem minimizes
//! and whether the raw iterates enter the combination:
//!
//! * `aa` (Anderson): minimizes the linear combination of preconditioned
//!   residuals `||r_k + sum_i alpha_i (r_k - r_{k-i})||` and updates
//!   `x_{k+1} = q(x_k) + sum_i alpha_i (q(x_k) - q(x_{k-i}))`.
//! * `aag`: same update, but the coefficients minimize the combination of
//!   classical residuals evaluated at the `q`-images,
//!   `||g(q(x_k)) + sum_i alpha_i (g(q(x_k)) - g(q(x_{k-i})))||` with
//!   `g(y) = A y - b`.
//! * `aar`: same update, coefficients minimize the preconditioned residuals
//!   at the `q`-images, `||r(q(x_k)) + sum_i alpha_i (r(q(x_k)) - r(q(x_{k-i})))||`.
//! * `ngmres`: updates `x_{k+1} = q(x_k) + sum_{i=0}^{m_k} beta_i (q(x_k) - x_{k-i})`
//!   (note the `i = 0` term over raw iterates), with the coefficients
//!   minimizing `||g(q(x_k)) + sum_i beta_i (g(q(x_k)) - g(x_{k-i}))||`.
//! * `ngmresr`: same update as `ngmres`, minimizing the preconditioned
//!   flavor `||r(q(x_k)) + sum_i beta_i (r(q(x_k)) - r(x_{k-i}))||`.
//!
//! Each variant caches exactly the residual flavor its subproblem needs:
//! `aa` and `ngmresr` reuse the preconditioned residuals, `ngmres` the
//! classical ones, while `aag`/`aar` store the residual of each iterate's
//! `q`-image (one extra operator evaluation per new iterate). `ngmres` and
//! `ngmresr` evaluate the residual of the current `q`-image fresh each step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::fixed_point::{validate_options, RichardsonOperator, SolveError};
use crate::linalg::{axpy, norm2, solve_least_squares, DenseMatrix, LeastSquaresSolution, Vector};
use crate::trace::{
    IterationVectors, MethodKind, SolveOptions, SolveReport, SolveStatus, StepRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AcceleratorVariant {
    Aa,
    Aag,
    Aar,
    Ngmres,
    Ngmresr,
}

impl AcceleratorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AcceleratorVariant::Aa => "aa",
            AcceleratorVariant::Aag => "aag",
            AcceleratorVariant::Aar => "aar",
            AcceleratorVariant::Ngmres => "ngmres",
            AcceleratorVariant::Ngmresr => "ngmresr",
        }
    }

    pub fn all() -> [AcceleratorVariant; 5] {
        [
            AcceleratorVariant::Aa,
            AcceleratorVariant::Aag,
            AcceleratorVariant::Aar,
            AcceleratorVariant::Ngmres,
            AcceleratorVariant::Ngmresr,
        ]
    }

    /// True for the variants whose update combines `q`-images of the window
    /// iterates only (`aa`, `aag`, `aar`); the NGMRES pair also includes the
    /// raw iterates with an `i = 0` term.
    pub fn is_anderson_family(&self) -> bool {
        matches!(
            self,
            AcceleratorVariant::Aa | AcceleratorVariant::Aag | AcceleratorVariant::Aar
        )
    }
}

impl fmt::Display for AcceleratorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AcceleratorVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aa" => Ok(AcceleratorVariant::Aa),
            "aag" => Ok(AcceleratorVariant::Aag),
            "aar" => Ok(AcceleratorVariant::Aar),
            "ngmres" => Ok(AcceleratorVariant::Ngmres),
            "ngmresr" => Ok(AcceleratorVariant::Ngmresr),
            other => Err(format!("unknown accelerator variant '{other}'")),
        }
    }
}

/// Window depth: `Window(m)` keeps the last `m + 1` iterates (`m = 0`
/// degenerates to plain Richardson), `Full` never evicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowDepth {
    Window(usize),
    Full,
}

impl WindowDepth {
    pub fn label(&self) -> String {
        match self {
            WindowDepth::Window(m) => format!("m{m}"),
            WindowDepth::Full => "full".into(),
        }
    }
}

impl fmt::Display for WindowDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for WindowDepth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(WindowDepth::Full);
        }
        s.parse::<usize>()
            .map(WindowDepth::Window)
            .map_err(|_| format!("window depth must be an integer or 'full', got '{s}'"))
    }
}

/// One remembered iterate with its `q`-image and residuals.
#[derive(Clone, Debug)]
pub struct WindowEntry {
    pub x: Vector,
    pub qx: Vector,
    pub r_preconditioned: Vector,
    pub r_classical: Vector,
    /// `A q(x) - b` for `aag`, `P (A q(x) - b)` for `aar`, absent otherwise.
    pub extra: Option<Vector>,
}

/// Ring buffer of recent iterates, newest last. Accessors index by age:
/// `entry(0)` is the current iterate `x_k`, `entry(j)` is `x_{k-j}`.
#[derive(Clone, Debug)]
pub struct HistoryWindow {
    capacity: Option<usize>,
    entries: VecDeque<WindowEntry>,
}

impl HistoryWindow {
    pub fn new(depth: WindowDepth) -> Self {
        let capacity = match depth {
            WindowDepth::Window(m) => Some(m + 1),
            WindowDepth::Full => None,
        };
        HistoryWindow { capacity, entries: VecDeque::new() }
    }

    /// Evaluates the fixed-point map at `x`, attaches the variant's cached
    /// residual flavor, and pushes the entry, evicting the oldest iterate
    /// once the depth is exceeded.
    pub fn push_state(
        &mut self,
        op: &RichardsonOperator,
        variant: AcceleratorVariant,
        x: Vector,
    ) -> Result<(), SolveError> {
        let e = op.eval(&x)?;
        let extra = match variant {
            AcceleratorVariant::Aag => Some(op.classical_residual(&e.qx)?),
            AcceleratorVariant::Aar => Some(op.residuals(&e.qx)?.preconditioned),
            _ => None,
        };
        self.entries.push_back(WindowEntry {
            x,
            qx: e.qx,
            r_preconditioned: e.r_preconditioned,
            r_classical: e.r_classical,
            extra,
        });
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap {
                self.entries.pop_front();
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Window span `m_k` (number of past iterates available).
    pub fn span(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn entry(&self, age: usize) -> &WindowEntry {
        &self.entries[self.entries.len() - 1 - age]
    }
}

/// Next iterate plus the least-squares subproblem that produced it.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_next: Vector,
    pub lsq: LeastSquaresSolution,
    /// The freshly evaluated `q`-image residual used as the subproblem's
    /// right-hand side by `ngmres`/`ngmresr`; `None` for the Anderson
    /// variants, which read it from the window cache instead.
    pub fresh_rhs: Option<Vector>,
}

fn difference(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(ai, bi)| ai - bi).collect()
}

fn design_matrix(n_rows: usize, cols: &[Vector]) -> Result<DenseMatrix, SolveError> {
    if cols.is_empty() {
        Ok(DenseMatrix::zeros(n_rows, 0))
    } else {
        Ok(DenseMatrix::from_columns(cols)?)
    }
}

/// `x_next = q(x_k) + sum_i c_i (q(x_k) - anchor_i)` where `anchor(i)`
/// yields the window vector paired with coefficient `i`.
fn combine<'w>(
    q0: &[f64],
    coefficients: &[f64],
    anchor: impl Fn(usize) -> &'w Vector,
) -> Vector {
    let mut x: Vector = q0.to_vec();
    for (i, &c) in coefficients.iter().enumerate() {
        axpy(c, q0, &mut x).expect("combine shapes fixed by construction");
        axpy(-c, anchor(i), &mut x).expect("combine shapes fixed by construction");
    }
    x
}

/// Anderson step: coefficients minimize
/// `||r_k - sum_i alpha_i (r_{k-i} - r_k)||` over the window's
/// preconditioned residuals.
pub fn aa_step(_op: &RichardsonOperator, w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    let e0 = w.entry(0);
    let cols: Vec<Vector> = (1..=w.span())
        .map(|i| difference(&w.entry(i).r_preconditioned, &e0.r_preconditioned))
        .collect();
    let m = design_matrix(e0.r_preconditioned.len(), &cols)?;
    let lsq = solve_least_squares(&m, &e0.r_preconditioned)?;
    let x_next = combine(&e0.qx, &lsq.coefficients, |i| &w.entry(i + 1).qx);
    Ok(StepOutcome { x_next, lsq, fresh_rhs: None })
}

/// Anderson update with coefficients minimizing the classical residuals of
/// the `q`-images cached in the window.
pub fn aag_step(_op: &RichardsonOperator, w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    anderson_extra_step(w)
}

/// Anderson update with coefficients minimizing the preconditioned
/// residuals of the `q`-images cached in the window.
pub fn aar_step(_op: &RichardsonOperator, w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    anderson_extra_step(w)
}

fn anderson_extra_step(w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    let e0 = w.entry(0);
    let rhs = e0.extra.as_ref().expect("variant caches the q-image residual");
    let cols: Vec<Vector> = (1..=w.span())
        .map(|i| {
            let ri = w.entry(i).extra.as_ref().expect("window entries are uniform");
            difference(ri, rhs)
        })
        .collect();
    let m = design_matrix(rhs.len(), &cols)?;
    let lsq = solve_least_squares(&m, rhs)?;
    let x_next = combine(&e0.qx, &lsq.coefficients, |i| &w.entry(i + 1).qx);
    Ok(StepOutcome { x_next, lsq, fresh_rhs: None })
}

/// Nonlinear GMRES step: combines the current `q`-image with the raw window
/// iterates, coefficients minimizing the classical residual of the blend.
/// Evaluates `g(q(x_k)) = A q(x_k) - b` fresh.
pub fn ngmres_step(op: &RichardsonOperator, w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    let e0 = w.entry(0);
    let rhs = op.classical_residual(&e0.qx)?;
    let cols: Vec<Vector> = (0..=w.span())
        .map(|i| difference(&w.entry(i).r_classical, &rhs))
        .collect();
    let m = design_matrix(rhs.len(), &cols)?;
    let lsq = solve_least_squares(&m, &rhs)?;
    let x_next = combine(&e0.qx, &lsq.coefficients, |i| &w.entry(i).x);
    Ok(StepOutcome { x_next, lsq, fresh_rhs: Some(rhs) })
}

/// As [`ngmres_step`] but minimizing the preconditioned residual flavor,
/// evaluating `r(q(x_k)) = P (A q(x_k) - b)` fresh.
pub fn ngmresr_step(op: &RichardsonOperator, w: &HistoryWindow) -> Result<StepOutcome, SolveError> {
    let e0 = w.entry(0);
    let rhs = op.residuals(&e0.qx)?.preconditioned;
    let cols: Vec<Vector> = (0..=w.span())
        .map(|i| difference(&w.entry(i).r_preconditioned, &rhs))
        .collect();
    let m = design_matrix(rhs.len(), &cols)?;
    let lsq = solve_least_squares(&m, &rhs)?;
    let x_next = combine(&e0.qx, &lsq.coefficients, |i| &w.entry(i).x);
    Ok(StepOutcome { x_next, lsq, fresh_rhs: Some(rhs) })
}

fn step(
    op: &RichardsonOperator,
    variant: AcceleratorVariant,
    w: &HistoryWindow,
) -> Result<StepOutcome, SolveError> {
    match variant {
        AcceleratorVariant::Aa => aa_step(op, w),
        AcceleratorVariant::Aag => aag_step(op, w),
        AcceleratorVariant::Aar => aar_step(op, w),
        AcceleratorVariant::Ngmres => ngmres_step(op, w),
        AcceleratorVariant::Ngmresr => ngmresr_step(op, w),
    }
}

/// Runs an accelerated Richardson iteration, stopping once the
/// preconditioned residual satisfies `||r_k|| <= tol * ||r_0||` or `maxit`
/// steps have been taken.
pub fn run_accelerated(
    op: &RichardsonOperator,
    variant: AcceleratorVariant,
    depth: WindowDepth,
    opts: &SolveOptions,
) -> Result<SolveReport, SolveError> {
    validate_options(opts)?;
    let kind = MethodKind::Accelerated { variant, depth };
    let mut window = HistoryWindow::new(depth);
    window.push_state(op, variant, op.problem().initial_guess.clone())?;
    let r0 = norm2(&window.entry(0).r_preconditioned);

    let mut trace: Vec<StepRecord> = Vec::new();
    let mut vectors = opts.retain_vectors.then(Vec::<IterationVectors>::new);
    let status;
    let mut k = 0;
    loop {
        let e0 = window.entry(0);
        let classical_norm = norm2(&e0.r_classical);
        let preconditioned_norm = norm2(&e0.r_preconditioned);
        let span = window.span();
        let diverged = !classical_norm.is_finite() || !preconditioned_norm.is_finite();
        let done =
            diverged || preconditioned_norm <= opts.tol * r0 || k == opts.maxit;

        if done {
            trace.push(StepRecord {
                k,
                classical_norm,
                preconditioned_norm,
                window_len: span,
                coefficients: vec![],
                lsq_rank: 0,
                lsq_residual_norm: f64::NAN,
            });
            if let Some(v) = vectors.as_mut() {
                v.push(IterationVectors {
                    x: e0.x.clone(),
                    qx: Some(e0.qx.clone()),
                    r_preconditioned: e0.r_preconditioned.clone(),
                    r_classical: e0.r_classical.clone(),
                    design_extra: e0.extra.clone(),
                    lsq_residual: None,
                });
            }
            let final_x = e0.x.clone();
            if diverged {
                return Err(SolveError::Diverged {
                    report: Box::new(SolveReport {
                        kind,
                        status: SolveStatus::Diverged,
                        final_x,
                        trace,
                        vectors,
                    }),
                });
            }
            status = if preconditioned_norm <= opts.tol * r0 {
                SolveStatus::Converged
            } else {
                SolveStatus::MaxIterations
            };
            return Ok(SolveReport { kind, status, final_x, trace, vectors });
        }

        let outcome = step(op, variant, &window)?;
        trace.push(StepRecord {
            k,
            classical_norm,
            preconditioned_norm,
            window_len: span,
            coefficients: outcome.lsq.coefficients.clone(),
            lsq_rank: outcome.lsq.rank,
            lsq_residual_norm: outcome.lsq.residual_norm,
        });
        if let Some(v) = vectors.as_mut() {
            v.push(IterationVectors {
                x: e0.x.clone(),
                qx: Some(e0.qx.clone()),
                r_preconditioned: e0.r_preconditioned.clone(),
                r_classical: e0.r_classical.clone(),
                design_extra: e0.extra.clone().or_else(|| outcome.fresh_rhs.clone()),
                lsq_residual: Some(outcome.lsq.residual_vector.clone()),
            });
        }
        window.push_state(op, variant, outcome.x_next)?;
        k += 1;
    }
}
