//! Modeling layer: variables, affine expressions and tagged constraints.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::ConicError;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub usize);

/// Domain of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Free,
    NonNeg,
    /// Real symmetric `dim x dim` matrix, optionally constrained PSD.
    Symmetric { dim: usize, psd: bool },
    /// Complex Hermitian `dim x dim` matrix, optionally constrained PSD.
    Hermitian { dim: usize, psd: bool },
}

impl VarKind {
    /// Number of real parameters.
    pub fn param_count(&self) -> usize {
        match *self {
            VarKind::Free | VarKind::NonNeg => 1,
            VarKind::Symmetric { dim, .. } => dim * (dim + 1) / 2,
            VarKind::Hermitian { dim, .. } => dim * dim,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, VarKind::Free | VarKind::NonNeg)
    }

    pub fn dim(&self) -> usize {
        match *self {
            VarKind::Free | VarKind::NonNeg => 1,
            VarKind::Symmetric { dim, .. } | VarKind::Hermitian { dim, .. } => dim,
        }
    }

    /// Whether the variable carries an implicit cone constraint.
    pub fn has_domain(&self) -> bool {
        match *self {
            VarKind::Free => false,
            VarKind::NonNeg => true,
            VarKind::Symmetric { psd, .. } | VarKind::Hermitian { psd, .. } => psd,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

/// One term of a scalar affine expression.
#[derive(Debug, Clone)]
pub enum ScalarTerm {
    /// `coef * x` for a scalar variable.
    Var(VarId, f64),
    /// `Re tr(C X)` for a matrix variable.
    Inner(VarId, CMatrix),
}

#[derive(Debug, Clone, Default)]
pub struct ScalarExpr {
    pub terms: Vec<ScalarTerm>,
    pub constant: f64,
}

impl ScalarExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        ScalarExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(mut self, v: VarId, coef: f64) -> Self {
        self.terms.push(ScalarTerm::Var(v, coef));
        self
    }

    pub fn inner(mut self, v: VarId, coef: CMatrix) -> Self {
        self.terms.push(ScalarTerm::Inner(v, coef));
        self
    }

    /// `scale * tr(X)`.
    pub fn trace(self, v: VarId, dim: usize, scale: f64) -> Self {
        self.inner(v, CMatrix::identity(dim, dim) * Complex64::new(scale, 0.0))
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// One term of a matrix affine expression.
#[derive(Debug, Clone)]
pub enum MatrixTerm {
    /// `x * M` for a scalar variable `x`.
    Scaled(VarId, CMatrix),
    /// `scale * L X Lᴴ` for a matrix variable `X`.
    Congruence { var: VarId, left: CMatrix, scale: f64 },
}

#[derive(Debug, Clone)]
pub struct MatrixExpr {
    pub dim: usize,
    pub terms: Vec<MatrixTerm>,
    pub constant: CMatrix,
}

impl MatrixExpr {
    pub fn new(dim: usize) -> Self {
        MatrixExpr { dim, terms: Vec::new(), constant: CMatrix::zeros(dim, dim) }
    }

    pub fn with_constant(mut self, c: CMatrix) -> Self {
        self.constant = c;
        self
    }

    pub fn scaled(mut self, v: VarId, m: CMatrix) -> Self {
        self.terms.push(MatrixTerm::Scaled(v, m));
        self
    }

    pub fn congruence(mut self, v: VarId, left: CMatrix, scale: f64) -> Self {
        self.terms.push(MatrixTerm::Congruence { var: v, left, scale });
        self
    }
}

#[derive(Debug, Clone)]
pub enum ConstraintKind {
    /// `expr = rhs`
    Eq { expr: ScalarExpr, rhs: f64 },
    /// `expr <= rhs`
    Le { expr: ScalarExpr, rhs: f64 },
    /// `expr ⪰ 0`
    Lmi { expr: MatrixExpr },
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub tag: String,
    pub kind: ConstraintKind,
}

/// A minimization problem over scalar and matrix variables.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub variables: Vec<Variable>,
    pub objective: ScalarExpr,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind) -> VarId {
        self.variables.push(Variable { name: name.into(), kind });
        VarId(self.variables.len() - 1)
    }

    pub fn set_objective(&mut self, expr: ScalarExpr) {
        self.objective = expr;
    }

    pub fn add_eq(&mut self, tag: impl Into<String>, expr: ScalarExpr, rhs: f64) -> ConstraintId {
        self.push(tag.into(), ConstraintKind::Eq { expr, rhs })
    }

    pub fn add_le(&mut self, tag: impl Into<String>, expr: ScalarExpr, rhs: f64) -> ConstraintId {
        self.push(tag.into(), ConstraintKind::Le { expr, rhs })
    }

    pub fn add_lmi(&mut self, tag: impl Into<String>, expr: MatrixExpr) -> ConstraintId {
        self.push(tag.into(), ConstraintKind::Lmi { expr })
    }

    fn push(&mut self, tag: String, kind: ConstraintKind) -> ConstraintId {
        self.constraints.push(Constraint { tag, kind });
        ConstraintId(self.constraints.len() - 1)
    }

    pub fn kind(&self, v: VarId) -> VarKind {
        self.variables[v.0].kind
    }

    /// Checks dimensions, variable references and Hermitian symmetry of the data.
    pub fn validate(&self) -> Result<(), ConicError> {
        self.validate_scalar("objective", &self.objective)?;
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Eq { expr, rhs } | ConstraintKind::Le { expr, rhs } => {
                    if !rhs.is_finite() {
                        return Err(ConicError::NonFinite(c.tag.clone()));
                    }
                    self.validate_scalar(&c.tag, expr)?;
                }
                ConstraintKind::Lmi { expr } => self.validate_matrix(&c.tag, expr)?,
            }
        }
        Ok(())
    }

    fn var_kind(&self, tag: &str, v: VarId) -> Result<VarKind, ConicError> {
        self.variables
            .get(v.0)
            .map(|x| x.kind)
            .ok_or_else(|| ConicError::UnknownVariable { tag: tag.to_string(), index: v.0 })
    }

    fn validate_scalar(&self, tag: &str, e: &ScalarExpr) -> Result<(), ConicError> {
        if !e.constant.is_finite() {
            return Err(ConicError::NonFinite(tag.to_string()));
        }
        for t in &e.terms {
            match t {
                ScalarTerm::Var(v, c) => {
                    if !self.var_kind(tag, *v)?.is_scalar() {
                        return Err(ConicError::KindMismatch(tag.to_string()));
                    }
                    if !c.is_finite() {
                        return Err(ConicError::NonFinite(tag.to_string()));
                    }
                }
                ScalarTerm::Inner(v, m) => {
                    let k = self.var_kind(tag, *v)?;
                    if k.is_scalar() {
                        return Err(ConicError::KindMismatch(tag.to_string()));
                    }
                    check_square(tag, m, k.dim())?;
                    check_hermitian(tag, m)?;
                }
            }
        }
        Ok(())
    }

    fn validate_matrix(&self, tag: &str, e: &MatrixExpr) -> Result<(), ConicError> {
        check_square(tag, &e.constant, e.dim)?;
        check_hermitian(tag, &e.constant)?;
        for t in &e.terms {
            match t {
                MatrixTerm::Scaled(v, m) => {
                    if !self.var_kind(tag, *v)?.is_scalar() {
                        return Err(ConicError::KindMismatch(tag.to_string()));
                    }
                    check_square(tag, m, e.dim)?;
                    check_hermitian(tag, m)?;
                }
                MatrixTerm::Congruence { var, left, scale } => {
                    let k = self.var_kind(tag, *var)?;
                    if k.is_scalar() {
                        return Err(ConicError::KindMismatch(tag.to_string()));
                    }
                    if left.nrows() != e.dim || left.ncols() != k.dim() {
                        return Err(ConicError::Dimension {
                            tag: tag.to_string(),
                            expected: (e.dim, k.dim()),
                            found: (left.nrows(), left.ncols()),
                        });
                    }
                    if !scale.is_finite() || left.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(ConicError::NonFinite(tag.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_square(tag: &str, m: &CMatrix, dim: usize) -> Result<(), ConicError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(ConicError::Dimension {
            tag: tag.to_string(),
            expected: (dim, dim),
            found: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn check_hermitian(tag: &str, m: &CMatrix) -> Result<(), ConicError> {
    let scale = m.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    for i in 0..m.nrows() {
        for j in 0..=i {
            let d = m[(i, j)] - m[(j, i)].conj();
            if !(d.norm() <= 1e-9 * scale) {
                return Err(ConicError::NotHermitian(tag.to_string()));
            }
        }
    }
    Ok(())
}

/// Value of a variable or dual multiplier.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Matrix(CMatrix),
}

impl Value {
    pub fn scalar(&self) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            Value::Matrix(m) => m[(0, 0)].re,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        match self {
            Value::Matrix(m) => m,
            Value::Scalar(_) => panic!("scalar value used as matrix"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal,
    /// The problem has no feasible point; `duals` hold a Farkas ray.
    Infeasible,
    /// The objective is unbounded below; `values` hold an improving ray.
    Unbounded,
    NumericalFailure(String),
}

/// Primal and dual solution.
///
/// Dual sign conventions: with `c` the objective gradient,
/// `c = Σ y·∇eq − Σ z·∇le + Σ Re tr(Z ∂F) + var_duals`, where `z ≥ 0` and `Z ⪰ 0`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub values: Vec<Value>,
    pub duals: Vec<Value>,
    /// Multipliers of the implicit variable domains (`None` for free variables).
    pub var_duals: Vec<Option<Value>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Optimal status granted after a stall within 100x of the tolerances.
    pub reduced_accuracy: bool,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> &Value {
        &self.values[v.0]
    }

    pub fn dual(&self, c: ConstraintId) -> &Value {
        &self.duals[c.0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality gap tolerance.
    pub tol: f64,
    /// Relative primal and dual residual tolerance.
    pub feastol: f64,
    pub max_iter: usize,
    /// Iterative refinement passes per linear solve.
    pub refinement: usize,
    /// Row scaling of the standard form before solving.
    pub equilibrate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, feastol: 1e-8, max_iter: 100, refinement: 3, equilibrate: true }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, feastol: tol, ..Self::default() }
    }
}
