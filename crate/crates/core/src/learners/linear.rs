use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_width, Design, LearnerError, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Ols,
    Ridge,
    Lasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: Option<f64>,
    /// Least-squares fits only: the centered design had fewer independent
    /// columns than features, and the minimum-norm solution was returned.
    #[serde(default)]
    pub rank_deficient: bool,
    /// Lasso only: objective value after each coordinate-descent sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[(usize, f64)]) -> f64 {
        self.intercept + row.iter().map(|&(j, v)| self.coefficients[j] * v).sum::<f64>()
    }
}

impl Predictor for LinearModel {
    fn input_width(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, x: &Design) -> Result<Vec<f64>, LearnerError> {
        check_width(self.coefficients.len(), x)?;
        Ok(x.rows().iter().map(|r| self.predict_row(r)).collect())
    }
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: DVector<f64>,
    y_mean: f64,
}

fn center(x: &DMatrix<f64>, y: &[f64]) -> Result<Centered, LearnerError> {
    if x.nrows() != y.len() {
        return Err(LearnerError::Dimension(format!("{} rows vs {} targets", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(LearnerError::Empty);
    }
    let n = y.len() as f64;
    let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let y_mean = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    Ok(Centered { x: xc, y: yc, x_mean, y_mean })
}

impl Centered {
    fn model(&self, kind: LinearKind, beta: DVector<f64>, alpha: Option<f64>) -> LinearModel {
        let intercept = self.y_mean - self.x_mean.dot(&beta);
        LinearModel {
            kind,
            coefficients: beta.iter().copied().collect(),
            intercept,
            alpha,
            rank_deficient: false,
            objective_trace: Vec::new(),
        }
    }
}

/// Eigendecomposition of the smaller Gram matrix of a centered design.
///
/// With `n >= d` this is `XᵀX` (primal); otherwise `XXᵀ` (dual). Either way
/// `(XᵀX + αI)⁺ Xᵀy` can be formed from it for any `α >= 0`, which also
/// yields the minimum-norm least-squares solution at `α = 0`.
struct GramSolver {
    primal: bool,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    /// `Vᵀ Xᵀ y` (primal) or `Vᵀ y` (dual).
    projected: DVector<f64>,
    tol: f64,
}

impl GramSolver {
    fn new(c: &Centered) -> Self {
        let (n, d) = c.x.shape();
        let primal = n >= d;
        let gram = if primal { c.x.tr_mul(&c.x) } else { &c.x * c.x.transpose() };
        let eig = SymmetricEigen::new(gram);
        let projected = if primal { eig.eigenvectors.tr_mul(&c.x.tr_mul(&c.y)) } else { eig.eigenvectors.tr_mul(&c.y) };
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
        let tol = lmax * n.max(d) as f64 * f64::EPSILON * 16.0;
        GramSolver { primal, eig, projected, tol }
    }

    fn rank(&self) -> usize {
        self.eig.eigenvalues.iter().filter(|&&l| l > self.tol).count()
    }

    fn solve(&self, c: &Centered, alpha: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.projected.len(),
            self.eig.eigenvalues.iter().zip(self.projected.iter()).map(|(&l, &p)| {
                if l > self.tol || (alpha > 0.0 && l + alpha > self.tol) {
                    p / (l.max(0.0) + alpha)
                } else {
                    0.0
                }
            }),
        );
        let w = &self.eig.eigenvectors * scaled;
        if self.primal {
            w
        } else {
            c.x.tr_mul(&w)
        }
    }
}

/// Least squares with an intercept; the minimum-norm solution when the
/// centered design is rank deficient.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel, LearnerError> {
    let c = center(x, y)?;
    let solver = GramSolver::new(&c);
    let rank = solver.rank();
    let mut m = c.model(LinearKind::Ols, solver.solve(&c, 0.0), None);
    m.rank_deficient = rank < x.ncols();
    Ok(m)
}

/// Solves `(XᵀX + αI)β = Xᵀy` on centered data; the intercept is not
/// penalized.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<LinearModel, LearnerError> {
    Ok(fit_ridge_path(x, y, &[alpha])?.pop().unwrap())
}

/// Ridge fits for several strengths sharing one decomposition.
pub fn fit_ridge_path(x: &DMatrix<f64>, y: &[f64], alphas: &[f64]) -> Result<Vec<LinearModel>, LearnerError> {
    if let Some(a) = alphas.iter().find(|a| a.is_nan() || **a < 0.0) {
        return Err(LearnerError::Invalid(format!("ridge alpha must be >= 0, got {a}")));
    }
    let c = center(x, y)?;
    let solver = GramSolver::new(&c);
    let rank = solver.rank();
    Ok(alphas
        .iter()
        .map(|&a| {
            let mut m = c.model(LinearKind::Ridge, solver.solve(&c, a), Some(a));
            m.rank_deficient = a == 0.0 && rank < x.ncols();
            m
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tol: 1e-6, max_sweeps: 1000 }
    }
}

/// Smallest alpha at which every lasso coefficient is zero:
/// `max_j |x̃_jᵀ ỹ| / n` on centered data.
pub fn lasso_alpha_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64, LearnerError> {
    let c = center(x, y)?;
    let n = y.len() as f64;
    Ok(c.x.column_iter().map(|col| col.dot(&c.y).abs() / n).fold(0.0, f64::max))
}

/// Lasso by cyclic coordinate descent on
/// `(1/2n)‖y − Xβ − b‖² + α‖β‖₁`.
pub fn fit_lasso(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<LinearModel, LearnerError> {
    fit_lasso_with(x, y, alpha, LassoOptions::default())
}

pub fn fit_lasso_with(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
    opts: LassoOptions,
) -> Result<LinearModel, LearnerError> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(LearnerError::Invalid(format!("lasso alpha must be >= 0, got {alpha}")));
    }
    let c = center(x, y)?;
    let (n, d) = c.x.shape();
    let nf = n as f64;
    let sq_norms: Vec<f64> = c.x.column_iter().map(|col| col.norm_squared() / nf).collect();
    let mut beta = DVector::<f64>::zeros(d);
    let mut resid = c.y.clone();
    let objective = |resid: &DVector<f64>, beta: &DVector<f64>| {
        resid.norm_squared() / (2.0 * nf) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let mut trace = vec![objective(&resid, &beta)];
    for _ in 0..opts.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..d {
            if sq_norms[j] <= 0.0 {
                continue;
            }
            let col = c.x.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) / nf + sq_norms[j] * old;
            let new = soft_threshold(rho, alpha) / sq_norms[j];
            let delta = new - old;
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(objective(&resid, &beta));
        if max_change < opts.tol {
            break;
        }
    }
    let mut m = c.model(LinearKind::Lasso, beta, Some(alpha));
    m.objective_trace = trace;
    Ok(m)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
