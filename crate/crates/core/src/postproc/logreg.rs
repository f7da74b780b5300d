//! Multinomial logistic regression with an l2 penalty on the weights.
//!
//! Minimizes `λ‖W‖² + Σ_i CE(W x_i + b, y_i)` over the labeled rows by
//! full-batch gradient descent. Each step starts from a Barzilai-Borwein
//! step length and backtracks until the Armijo condition holds, so the
//! objective never increases between accepted iterates. The bias is not
//! penalized.

use crate::error::{Error, Result};
use crate::io::LabelTable;
use crate::tensor::{dot, Matrix};

pub const DEFAULT_LAMBDA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop once the gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    k: usize,
    dim: usize,
    weights: Matrix,
    bias: Vec<f64>,
    lambda: f64,
}

impl LinearModel {
    pub fn new(weights: Matrix, bias: Vec<f64>, lambda: f64) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("model parameters must be finite"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::validation(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            k: weights.rows(),
            dim: weights.cols(),
            weights,
            bias,
            lambda,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Objective at the start and after every accepted step.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_inf: f64,
}

/// Labeled rows gathered into a dense problem.
struct Problem<'a> {
    features: &'a Matrix,
    rows: Vec<usize>,
    labels: Vec<usize>,
    k: usize,
    dim: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        self.k * (self.dim + 1)
    }

    /// Objective and gradient at `theta = [W row-major, b]`.
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (k, dim) = (self.k, self.dim);
        let (w, b) = theta.split_at(k * dim);
        let (gw, gb) = grad.split_at_mut(k * dim);
        let mut f = self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in gw.iter_mut().zip(w) {
            *g = 2.0 * self.lambda * v;
        }
        gb.fill(0.0);
        let mut z = vec![0.0; k];
        for (&r, &y) in self.rows.iter().zip(&self.labels) {
            let x = self.features.row(r);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = dot(&w[j * dim..(j + 1) * dim], x) + b[j];
            }
            let lse = log_sum_exp(&z);
            f += lse - z[y];
            for j in 0..k {
                let coef = (z[j] - lse).exp() - if j == y { 1.0 } else { 0.0 };
                gb[j] += coef;
                if coef != 0.0 {
                    for (g, &xv) in gw[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                        *g += coef * xv;
                    }
                }
            }
        }
        f
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn build_problem<'a>(
    features: &'a Matrix,
    labels: &LabelTable,
    k: usize,
    lambda: f64,
) -> Result<Problem<'a>> {
    if k < 2 {
        return Err(Error::validation(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if labels.len() < k {
        return Err(Error::validation(format!(
            "{} labeled samples for {k} classes",
            labels.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::validation(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    labels.validate(Some(features.rows()), Some(k))?;
    let mut counts = vec![0usize; k];
    let mut rows = Vec::with_capacity(labels.len());
    let mut ys = Vec::with_capacity(labels.len());
    for &(r, y) in labels.rows() {
        if features.row(r).iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature in sample {r}"
            )));
        }
        counts[y] += 1;
        rows.push(r);
        ys.push(y);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::validation(format!(
            "class {empty} has no training samples"
        )));
    }
    Ok(Problem {
        features,
        rows,
        labels: ys,
        k,
        dim: features.cols(),
        lambda,
    })
}

/// Trains on the rows of `features` named in `labels`.
pub fn train_logreg(
    features: &Matrix,
    labels: &LabelTable,
    k: usize,
    lambda: f64,
    config: &TrainConfig,
) -> Result<LinearModel> {
    train_logreg_traced(features, labels, k, lambda, config).map(|(m, _)| m)
}

pub fn train_logreg_traced(
    features: &Matrix,
    labels: &LabelTable,
    k: usize,
    lambda: f64,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainTrace)> {
    let problem = build_problem(features, labels, k, lambda)?;
    let n_params = problem.n_params();
    let mut theta = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut f = problem.eval(&theta, &mut grad);
    let mut objectives = vec![f];

    let mut trial = vec![0.0; n_params];
    let mut trial_grad = vec![0.0; n_params];
    let mut step = 1.0 / dot(&grad, &grad).sqrt().max(1.0);
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) < config.grad_tol;

    while !converged && iterations < config.max_iters {
        let g2 = dot(&grad, &grad);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            for ((t, &th), &g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th - alpha * g;
            }
            let ft = problem.eval(&trial, &mut trial_grad);
            if ft.is_finite() && ft <= f - config.armijo * alpha * g2 {
                accepted = Some(ft);
                break;
            }
            alpha *= config.shrink;
        }
        let Some(ft) = accepted else {
            break;
        };
        iterations += 1;

        // Barzilai-Borwein length for the next step: sᵀs / sᵀy.
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n_params {
            let s = trial[i] - theta[i];
            ss += s * s;
            sy += s * (trial_grad[i] - grad[i]);
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            alpha * 2.0
        };

        std::mem::swap(&mut theta, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        f = ft;
        objectives.push(f);
        converged = inf_norm(&grad) < config.grad_tol;
    }

    let (k, dim) = (problem.k, problem.dim);
    let bias = theta[k * dim..].to_vec();
    theta.truncate(k * dim);
    let model = LinearModel::new(Matrix::new(k, dim, theta)?, bias, lambda)?;
    let trace = TrainTrace {
        objectives,
        iterations,
        converged,
        final_grad_inf: inf_norm(&grad),
    };
    Ok((model, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    /// Softmax probabilities, one row per sample.
    pub probabilities: Matrix,
}

impl Prediction {
    /// Fraction of `labels` rows whose predicted class matches.
    pub fn accuracy(&self, labels: &LabelTable) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = labels
            .rows()
            .iter()
            .filter(|&&(i, y)| self.classes.get(i) == Some(&y))
            .count();
        hits as f64 / labels.len() as f64
    }
}

pub fn predict(model: &LinearModel, features: &Matrix) -> Result<Prediction> {
    if features.cols() != model.dim {
        return Err(Error::shape(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            model.dim
        )));
    }
    let k = model.k;
    let mut probabilities = Matrix::zeros(features.rows(), k);
    let mut classes = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let x = features.row(i);
        let z: Vec<f64> = (0..k)
            .map(|j| dot(model.weights.row(j), x) + model.bias[j])
            .collect();
        let lse = log_sum_exp(&z);
        let row = probabilities.row_mut(i);
        for (p, zj) in row.iter_mut().zip(&z) {
            *p = (zj - lse).exp();
        }
        let best = z
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > z[best] { j } else { best });
        classes.push(best);
    }
    Ok(Prediction {
        classes,
        probabilities,
    })
}
