//! Sample-weighted, L2-penalized logistic regression.
//!
//! The model is `P(y = 1 | x) = exp(a + b·x) / (1 + exp(a + b·x))`. Fitting
//! minimizes
//!
//! ```text
//! sum_i w_i * [softplus(z_i) - y_i * z_i] + (l2 / 2) * |b|^2,   z_i = a + b·x_i
//! ```
//!
//! which equals the weighted negative log-likelihood. The intercept `a` is
//! not penalized. The primary solver is damped Newton (IRLS with step
//! halving); plain gradient descent is kept as an independent slow solver.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assemble::DesignMatrix;
use crate::schema::{Feature, FeatureEncoding, MachineStateRow, Standardization};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogRegError {
    #[error("feature vector has {found} values, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("cannot fit: {0}")]
    Unfittable(&'static str),
    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid fit config: {0}")]
    Config(String),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Newton,
    GradientDescent,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Newton => "newton",
            Solver::GradientDescent => "gradient_descent",
        })
    }
}

impl FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newton" => Ok(Solver::Newton),
            "gradient_descent" | "gd" => Ok(Solver::GradientDescent),
            other => Err(format!("unknown solver {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Ridge penalty on the coefficients (not the intercept).
    pub l2_strength: f64,
    /// Convergence threshold on the gradient max-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: Solver,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            l2_strength: 1.0,
            tolerance: 1e-8,
            max_iterations: 100,
            solver: Solver::Newton,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), LogRegError> {
        if !(self.l2_strength.is_finite() && self.l2_strength >= 0.0) {
            return Err(LogRegError::Config(format!(
                "l2_strength must be finite and >= 0, got {}",
                self.l2_strength
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(LogRegError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(LogRegError::Config(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Intercept and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Params {
    pub fn zeros(n_features: usize) -> Self {
        Self {
            alpha: 0.0,
            beta: vec![0.0; n_features],
        }
    }

    /// `[alpha, beta...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + 1);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        Self {
            alpha: theta[0],
            beta: theta[1..].to_vec(),
        }
    }

    pub fn linear_term(&self, x: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub encoding: FeatureEncoding,
    pub fit_meta: FitMeta,
    pub fit_config: FitConfig,
}

/// Logistic function, evaluated without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow or cancellation.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

// Largest f64 below 1.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

impl LogisticModel {
    pub fn params(&self) -> Params {
        Params {
            alpha: self.alpha,
            beta: self.beta.clone(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    /// Failure probability for an encoded feature vector, kept strictly
    /// inside (0, 1) even when the linear term saturates.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, LogRegError> {
        if x.len() != self.beta.len() {
            return Err(LogRegError::Dimension {
                expected: self.beta.len(),
                found: x.len(),
            });
        }
        let z = self.params().linear_term(x);
        Ok(sigmoid(z).clamp(f64::MIN_POSITIVE, ONE_BELOW))
    }

    /// `predict_proba(x) >= threshold`.
    pub fn predict(&self, x: &[f64], threshold: f64) -> Result<bool, LogRegError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(LogRegError::Threshold(threshold));
        }
        Ok(self.predict_proba(x)? >= threshold)
    }

    /// Encodes a raw machine-state row with the model's encoding, then scores it.
    pub fn predict_row_proba(&self, row: &MachineStateRow) -> f64 {
        let x = self.encoding.encode_row(row);
        self.predict_proba(&x).expect("encoding width matches beta")
    }

    /// Coefficients paired with feature names, in encoding order.
    pub fn named_coefficients(&self) -> Vec<(String, f64)> {
        self.encoding
            .feature_names()
            .into_iter()
            .zip(self.beta.iter().copied())
            .collect()
    }
}

/// Weighted penalized negative log-likelihood.
pub fn objective(params: &Params, data: &DesignMatrix, config: &FitConfig) -> f64 {
    let mut total = CompensatedSum::default();
    for ((x, &y), &w) in data.rows().zip(data.labels()).zip(data.weights()) {
        if w == 0.0 {
            continue;
        }
        let z = params.linear_term(x);
        let yz = if y { z } else { 0.0 };
        total.add(w * (softplus(z) - yz));
    }
    total.add(0.5 * config.l2_strength * params.beta.iter().map(|b| b * b).sum::<f64>());
    total.value()
}

// Neumaier summation. The line search compares objectives that differ in the
// last few ulps, so plain accumulation error over many rows would swamp it.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Gradient of [`objective`] as `[d/dalpha, d/dbeta...]`.
pub fn gradient(params: &Params, data: &DesignMatrix, config: &FitConfig) -> Vec<f64> {
    let p = params.beta.len();
    let mut g = vec![0.0; p + 1];
    for ((x, &y), &w) in data.rows().zip(data.labels()).zip(data.weights()) {
        if w == 0.0 {
            continue;
        }
        let r = w * (sigmoid(params.linear_term(x)) - if y { 1.0 } else { 0.0 });
        g[0] += r;
        for (gj, xj) in g[1..].iter_mut().zip(x) {
            *gj += r * xj;
        }
    }
    for (gj, b) in g[1..].iter_mut().zip(&params.beta) {
        *gj += config.l2_strength * b;
    }
    g
}

/// Hessian of [`objective`], same layout as [`gradient`].
pub fn hessian(params: &Params, data: &DesignMatrix, config: &FitConfig) -> DMatrix<f64> {
    let dim = params.beta.len() + 1;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut aug = vec![0.0; dim];
    aug[0] = 1.0;
    for (x, &w) in data.rows().zip(data.weights()) {
        if w == 0.0 {
            continue;
        }
        let pi = sigmoid(params.linear_term(x));
        let c = w * pi * (1.0 - pi);
        if c == 0.0 {
            continue;
        }
        aug[1..].copy_from_slice(x);
        // Lower triangle only; mirrored below.
        for j in 0..dim {
            let cj = c * aug[j];
            for k in 0..=j {
                h[(j, k)] += cj * aug[k];
            }
        }
    }
    for j in 0..dim {
        for k in 0..j {
            h[(k, j)] = h[(j, k)];
        }
    }
    for j in 1..dim {
        h[(j, j)] += config.l2_strength;
    }
    h
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Objective values at the start and after each accepted iteration.
pub type ObjectiveTrace = Vec<f64>;

/// Fits the model; see [`fit_traced`] for the iteration trace.
pub fn fit(data: &DesignMatrix, config: &FitConfig) -> Result<LogisticModel, LogRegError> {
    fit_traced(data, config).map(|(m, _)| m)
}

pub fn fit_traced(
    data: &DesignMatrix,
    config: &FitConfig,
) -> Result<(LogisticModel, ObjectiveTrace), LogRegError> {
    config.validate()?;
    if data.n_samples() == 0 {
        return Err(LogRegError::Unfittable("no rows"));
    }
    let positives = data.labels().iter().filter(|y| **y).count();
    if positives == 0 || positives == data.n_samples() {
        return Err(LogRegError::Unfittable("labels contain a single class"));
    }
    let start = Params::zeros(data.n_features());
    let (params, meta, trace) = match config.solver {
        Solver::Newton => newton(data, config, start)?,
        Solver::GradientDescent => gradient_descent(data, config, start)?,
    };
    let model = LogisticModel {
        alpha: params.alpha,
        beta: params.beta,
        encoding: data.encoding().clone(),
        fit_meta: meta,
        fit_config: *config,
    };
    Ok((model, trace))
}

// Objective increases this small are treated as evaluation noise.
const NOISE: f64 = 1e-13;

fn newton(
    data: &DesignMatrix,
    config: &FitConfig,
    mut params: Params,
) -> Result<(Params, FitMeta, ObjectiveTrace), LogRegError> {
    let mut f = objective(&params, data, config);
    let mut trace = vec![f];
    let mut g = gradient(&params, data, config);
    let mut iterations = 0;

    while max_norm(&g) > config.tolerance && iterations < config.max_iterations {
        iterations += 1;
        let step = newton_direction(&hessian(&params, data, config), &g);
        let theta = params.to_vec();

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let candidate = Params::from_slice(&trial);
            let f_new = objective(&candidate, data, config);
            if !f_new.is_finite() {
                return Err(LogRegError::NonFinite {
                    iteration: iterations,
                });
            }
            if f_new <= f {
                accepted = Some((candidate, f_new, None));
                break;
            }
            if f_new - f <= NOISE * f.abs().max(1.0) {
                let g_new = gradient(&candidate, data, config);
                if max_norm(&g_new) < max_norm(&g) {
                    accepted = Some((candidate, f_new, Some(g_new)));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((candidate, f_new, g_new)) = accepted else {
            break;
        };
        params = candidate;
        f = f_new;
        trace.push(f);
        g = g_new.unwrap_or_else(|| gradient(&params, data, config));
    }

    let gradient_norm = max_norm(&g);
    let meta = FitMeta {
        iterations,
        objective: f,
        gradient_norm,
        converged: gradient_norm <= config.tolerance,
    };
    Ok((params, meta, trace))
}

/// Solves `H d = -g`, adding a growing ridge if `H` is not positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let rhs = -DVector::from_column_slice(g);
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
    let mut jitter = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return chol.solve(&rhs).iter().copied().collect();
        }
        jitter = if jitter == 0.0 {
            scale * 1e-12
        } else {
            jitter * 10.0
        };
        if jitter > scale * 1e6 {
            // Fall back to a scaled gradient step.
            return rhs.iter().map(|v| v / scale).collect();
        }
    }
}

fn gradient_descent(
    data: &DesignMatrix,
    config: &FitConfig,
    mut params: Params,
) -> Result<(Params, FitMeta, ObjectiveTrace), LogRegError> {
    // Lipschitz bound of the gradient: 0.25 * sum_i w_i (1 + |x_i|^2) + l2.
    let lipschitz = 0.25
        * data
            .rows()
            .zip(data.weights())
            .map(|(x, w)| w * (1.0 + x.iter().map(|v| v * v).sum::<f64>()))
            .sum::<f64>()
        + config.l2_strength;
    let step = 1.0 / lipschitz;

    let mut f = objective(&params, data, config);
    let mut trace = vec![f];
    let mut g = gradient(&params, data, config);
    let mut iterations = 0;
    while max_norm(&g) > config.tolerance && iterations < config.max_iterations {
        iterations += 1;
        params.alpha -= step * g[0];
        for (b, gj) in params.beta.iter_mut().zip(&g[1..]) {
            *b -= step * gj;
        }
        f = objective(&params, data, config);
        if !f.is_finite() {
            return Err(LogRegError::NonFinite {
                iteration: iterations,
            });
        }
        trace.push(f);
        g = gradient(&params, data, config);
    }
    let gradient_norm = max_norm(&g);
    let meta = FitMeta {
        iterations,
        objective: f,
        gradient_norm,
        converged: gradient_norm <= config.tolerance,
    };
    Ok((params, meta, trace))
}

// ---------------------------------------------------------------------------
// Model files

/// Format tag written at the top of every model file.
pub const MODEL_FORMAT: &str = "pdmaint-logistic-model/1";

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    alpha: f64,
    fit: FitMeta,
    fit_config: FitConfig,
    coefficients: Vec<CoefficientEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CoefficientEntry {
    feature: String,
    weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_dev: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed model file: {0}")]
    Parse(String),
}

impl LogisticModel {
    /// Renders the model as TOML. Floats use the shortest representation
    /// that parses back to the identical `f64`.
    pub fn to_toml(&self) -> String {
        let coefficients = self
            .encoding
            .features()
            .iter()
            .zip(self.encoding.stats())
            .zip(&self.beta)
            .map(|((f, s), w)| CoefficientEntry {
                feature: f.name(),
                weight: *w,
                mean: s.map(|s| s.mean),
                std_dev: s.map(|s| s.std_dev),
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            alpha: self.alpha,
            fit: self.fit_meta,
            fit_config: self.fit_config,
            coefficients,
        };
        toml::to_string(&file).expect("model file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelFileError> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| ModelFileError::Parse(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ModelFileError::Parse(format!(
                "unsupported format {:?}",
                file.format
            )));
        }
        let mut features = Vec::new();
        let mut stats = Vec::new();
        let mut beta = Vec::new();
        for c in file.coefficients {
            let feature: Feature = c
                .feature
                .parse()
                .map_err(|e: crate::schema::UnknownFeature| ModelFileError::Parse(e.to_string()))?;
            let s = match (c.mean, c.std_dev) {
                (Some(mean), Some(std_dev)) => Some(Standardization { mean, std_dev }),
                (None, None) => None,
                _ => {
                    return Err(ModelFileError::Parse(format!(
                        "feature {} has only one of mean/std_dev",
                        c.feature
                    )))
                }
            };
            features.push(feature);
            stats.push(s);
            beta.push(c.weight);
        }
        Ok(Self {
            alpha: file.alpha,
            beta,
            encoding: FeatureEncoding::new(features, stats),
            fit_meta: file.fit,
            fit_config: file.fit_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(alpha: f64, beta: Vec<f64>) -> LogisticModel {
        let features = Feature::all()[..beta.len()].to_vec();
        LogisticModel {
            alpha,
            beta,
            encoding: FeatureEncoding::identity(features),
            fit_meta: FitMeta {
                iterations: 0,
                objective: 0.0,
                gradient_norm: 0.0,
                converged: true,
            },
            fit_config: FitConfig::default(),
        }
    }

    fn tiny(rows: &[[f64; 1]], labels: &[bool], weights: &[f64]) -> DesignMatrix {
        DesignMatrix::from_raw(
            vec![Feature::Volt],
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            labels.to_vec(),
            weights.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn probability_at_reference_points() {
        let m = model(0.0, vec![0.0, 0.0]);
        assert_eq!(m.predict_proba(&[3.0, -7.0]).unwrap(), 0.5);
        let m = model(3f64.ln(), vec![0.0]);
        assert!((m.predict_proba(&[1.0]).unwrap() - 0.75).abs() < 1e-15);
        let m = model(-800.0, vec![0.0]);
        let p = m.predict_proba(&[0.0]).unwrap();
        assert!(p > 0.0 && p < 1e-300);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = model(0.0, vec![1.0, 2.0]);
        assert_eq!(
            m.predict_proba(&[1.0]).unwrap_err(),
            LogRegError::Dimension {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let m = model(0.0, vec![0.0]);
        assert!(m.predict(&[0.0], 0.5).unwrap());
        let z = (0.49f64 / 0.51).ln();
        let m = model(z, vec![0.0]);
        assert!(!m.predict(&[0.0], 0.5).unwrap());
        assert!(m.predict(&[0.0], 0.0).is_err());
        assert!(m.predict(&[0.0], 1.0).is_err());
    }

    #[test]
    fn objective_at_zero_is_n_ln2() {
        let data = tiny(&[[1.0], [-2.0], [0.5]], &[true, false, false], &[1.0; 3]);
        let f = objective(&Params::zeros(1), &data, &FitConfig::default());
        assert!((f - 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_leave_only_the_penalty_gradient() {
        let data = tiny(&[[1.0], [-2.0]], &[true, false], &[0.0, 0.0]);
        let params = Params {
            alpha: 0.3,
            beta: vec![-1.7],
        };
        let cfg = FitConfig {
            l2_strength: 2.5,
            ..Default::default()
        };
        assert_eq!(gradient(&params, &data, &cfg), vec![0.0, 2.5 * -1.7]);
    }

    #[test]
    fn single_class_is_unfittable() {
        let data = tiny(&[[1.0], [2.0]], &[false, false], &[1.0, 1.0]);
        assert!(matches!(
            fit(&data, &FitConfig::default()),
            Err(LogRegError::Unfittable(_))
        ));
    }

    #[test]
    fn label_flip_symmetry_gives_zero_intercept() {
        // Invariant under (x, y) -> (-x, 1 - y): the objective is even in alpha.
        let rows = [[1.0], [2.0], [-1.0], [-2.0], [0.5], [-0.5]];
        let labels = [true, false, false, true, true, false];
        let data = tiny(&rows, &labels, &[1.0; 6]);
        let m = fit(&data, &FitConfig::default()).unwrap();
        assert!(m.fit_meta.converged);
        assert!(m.alpha.abs() < 1e-6, "{}", m.alpha);
    }

    #[test]
    fn sign_symmetry_gives_zero_slope() {
        // Invariant under (x, y) -> (-x, y): the objective is even in beta.
        let rows = [[1.0], [-1.0], [2.0], [-2.0], [0.5], [-0.5]];
        let labels = [true, true, false, false, true, true];
        let data = tiny(&rows, &labels, &[1.0; 6]);
        let cfg = FitConfig {
            l2_strength: 0.0,
            ..Default::default()
        };
        let m = fit(&data, &cfg).unwrap();
        assert!(m.fit_meta.converged);
        assert!(m.beta[0].abs() < 1e-6, "{}", m.beta[0]);
    }

    #[test]
    fn solver_parses() {
        assert_eq!("newton".parse::<Solver>().unwrap(), Solver::Newton);
        assert_eq!(
            "gradient_descent".parse::<Solver>().unwrap(),
            Solver::GradientDescent
        );
        assert!("lbfgs".parse::<Solver>().is_err());
    }

    #[test]
    fn model_file_roundtrip_is_exact() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).sqrt()])
            .collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let data = DesignMatrix::from_raw(
            vec![Feature::Error(0), Feature::Volt],
            &rows,
            labels,
            vec![1.0; 40],
        )
        .unwrap();
        let mut m = fit(&data, &FitConfig::default()).unwrap();
        m.encoding = FeatureEncoding::new(
            m.encoding.features().to_vec(),
            vec![
                None,
                Some(Standardization {
                    mean: 0.1 + 0.2,
                    std_dev: 1.0 / 3.0,
                }),
            ],
        );
        let text = m.to_toml();
        assert!(text.contains(MODEL_FORMAT));
        assert_eq!(LogisticModel::from_toml(&text).unwrap(), m);
    }
}
