//! Pre-trained model references and the built-in kernel ridge family.
//!
//! A [`ModelRef`] is the serialisable handle stored next to a specification.
//! Built-in models keep their parameters in a base64 blob; external models
//! keep only a command line and are queried over line-delimited JSON on the
//! child's stdin/stdout (`{"X": [[...]]}` in, `{"y": [...]}` out).

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::kmeans;
use crate::linalg;

pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    KernelRidgeClassifier,
    KernelRidgeRegressor,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    ClassIndex,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub kind: ModelKind,
    /// base64-encoded JSON parameters.
    pub params: String,
    pub dim: usize,
    pub output: OutputKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RidgeParams {
    kernel: KernelConfig,
    centers: Vec<Vec<f64>>,
    /// One coefficient column per output, each of length `centers.len()`.
    coef: Vec<Vec<f64>>,
    #[serde(default)]
    classes: Vec<f64>,
    #[serde(default)]
    constant: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExternalParams {
    command: Vec<String>,
}

impl ModelRef {
    fn encode<T: Serialize>(
        kind: ModelKind,
        params: &T,
        dim: usize,
        output: OutputKind,
    ) -> Result<Self> {
        let json = serde_json::to_vec(params)?;
        Ok(ModelRef { kind, params: B64.encode(json), dim, output })
    }

    fn decode<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        let bytes = B64
            .decode(&self.params)
            .map_err(|e| Error::input(format!("model parameter blob is not base64: {e}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Reference to a model served by an external process.
    pub fn external(command: Vec<String>, dim: usize, output: OutputKind) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::input("external model needs a command"));
        }
        Self::encode(ModelKind::External, &ExternalParams { command }, dim, output)
    }

    pub fn load(&self) -> Result<Model> {
        match self.kind {
            ModelKind::External => {
                let p: ExternalParams = self.decode()?;
                Ok(Model::External(ExternalModel { command: p.command, dim: self.dim }))
            }
            _ => {
                let p: RidgeParams = self.decode()?;
                let centers = if p.centers.is_empty() {
                    Points::empty(self.dim)
                } else {
                    Points::from_rows(&p.centers)?
                };
                centers.check_dim(self.dim)?;
                let l = centers.len();
                let coef = DMatrix::from_fn(l, p.coef.len(), |i, j| p.coef[j][i]);
                Ok(Model::KernelRidge(KernelRidgeModel {
                    kernel: p.kernel,
                    centers,
                    coef,
                    classes: p.classes,
                    constant: p.constant,
                    output: self.output,
                }))
            }
        }
    }

    /// Basis centers of a built-in model; `None` for external models.
    pub fn centers(&self) -> Result<Option<Points>> {
        match self.load()? {
            Model::KernelRidge(m) => Ok(Some(m.centers)),
            Model::External(_) => Ok(None),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A decoded, ready-to-run model.
#[derive(Debug, Clone)]
pub enum Model {
    KernelRidge(KernelRidgeModel),
    External(ExternalModel),
}

impl Model {
    pub fn predict(&self, x: &Points) -> Result<Vec<f64>> {
        match self {
            Model::KernelRidge(m) => m.predict(x),
            Model::External(m) => m.predict(x),
        }
    }
}

pub fn predict(model: &ModelRef, x: &Points) -> Result<Vec<f64>> {
    x.check_dim(model.dim)?;
    model.load()?.predict(x)
}

#[derive(Debug, Clone)]
pub struct KernelRidgeModel {
    kernel: KernelConfig,
    centers: Points,
    coef: DMatrix<f64>,
    classes: Vec<f64>,
    constant: Option<f64>,
    output: OutputKind,
}

impl KernelRidgeModel {
    pub fn classes(&self) -> &[f64] {
        &self.classes
    }

    /// Raw decision scores, one column per class (or a single regression
    /// column). Empty for constant models.
    pub fn scores(&self, x: &Points) -> Result<DMatrix<f64>> {
        x.check_dim(self.centers.dim())?;
        if self.constant.is_some() {
            return Ok(DMatrix::zeros(x.len(), 0));
        }
        Ok(gram(&self.kernel, x, &self.centers)? * &self.coef)
    }

    pub fn predict(&self, x: &Points) -> Result<Vec<f64>> {
        if let Some(c) = self.constant {
            x.check_dim(self.centers.dim())?;
            return Ok(vec![c; x.len()]);
        }
        let s = self.scores(x)?;
        Ok(match self.output {
            OutputKind::Real => s.column(0).iter().copied().collect(),
            OutputKind::ClassIndex => s
                .row_iter()
                .map(|r| {
                    let mut best = 0;
                    for j in 1..r.len() {
                        if r[j] > r[best] {
                            best = j;
                        }
                    }
                    self.classes[best]
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExternalModel {
    command: Vec<String>,
    dim: usize,
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    #[serde(rename = "X")]
    x: &'a Points,
}

#[derive(Deserialize)]
struct ExternalResponse {
    y: Vec<f64>,
}

impl ExternalModel {
    /// Runs one request/response exchange with a fresh child process.
    pub fn predict(&self, x: &Points) -> Result<Vec<f64>> {
        x.check_dim(self.dim)?;
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{}`: {e}", self.command[0])))?;

        let mut line = serde_json::to_string(&ExternalRequest { x })?;
        line.push('\n');
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // a broken pipe surfaces below through the exit status
            let _ = stdin.write_all(line.as_bytes());
        }
        let mut reply = String::new();
        let read = BufReader::new(child.stdout.take().expect("stdout is piped")).read_line(&mut reply);
        let out = child
            .wait_with_output()
            .map_err(|e| Error::External(format!("waiting for model process: {e}")))?;
        let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
        if !out.status.success() {
            return Err(Error::External(format!("model exited with {}: {stderr}", out.status)));
        }
        read.map_err(|e| Error::External(format!("reading model reply: {e}")))?;
        let resp: ExternalResponse = serde_json::from_str(reply.trim()).map_err(|e| {
            Error::External(format!("malformed reply `{}`: {e}; stderr: {stderr}", reply.trim()))
        })?;
        if resp.y.len() != x.len() {
            return Err(Error::External(format!(
                "model returned {} predictions for {} rows",
                resp.y.len(),
                x.len()
            )));
        }
        Ok(resp.y)
    }
}

fn class_values(labels: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = labels.iter().find(|v| !(v.fract() == 0.0 && **v >= 0.0)) {
        return Err(Error::input(format!("class labels must be non-negative integers, got {bad}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    Ok(classes)
}

/// Solves for coefficients on `centers`. When the centers are the training
/// points this is plain kernel ridge, `(G + ridge I) alpha = Y`; otherwise
/// the regularised least-squares fit
/// `(K_nc^T K_nc + ridge K_cc) alpha = K_nc^T Y`.
fn fit(
    cfg: &KernelConfig,
    x: &Points,
    targets: &DMatrix<f64>,
    centers: Option<&Points>,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    match centers {
        None => linalg::solve_ridge(&gram(cfg, x, x)?, targets, ridge),
        Some(c) => {
            let knc = gram(cfg, x, c)?;
            let mut lhs = knc.transpose() * &knc;
            lhs += gram(cfg, c, c)? * ridge;
            linalg::solve_ridge(&lhs, &(knc.transpose() * targets), 1e-10)
        }
    }
}

fn train_classifier(
    cfg: &KernelConfig,
    data: &Dataset,
    ridge: f64,
    centers: Option<Points>,
) -> Result<ModelRef> {
    check_training(cfg, data, ridge)?;
    let y = data.labels()?;
    let classes = class_values(y)?;
    let dim = data.dim();
    if classes.len() == 1 {
        return constant_model(ModelKind::KernelRidgeClassifier, cfg, dim, classes[0], OutputKind::ClassIndex);
    }
    let targets = DMatrix::from_fn(y.len(), classes.len(), |i, j| {
        if y[i] == classes[j] {
            1.0
        } else {
            -1.0
        }
    });
    let coef = fit(cfg, &data.x, &targets, centers.as_ref(), ridge)?;
    let centers = centers.unwrap_or_else(|| data.x.clone());
    ridge_model(ModelKind::KernelRidgeClassifier, cfg, &centers, &coef, classes, OutputKind::ClassIndex)
}

fn train_regressor(
    cfg: &KernelConfig,
    data: &Dataset,
    ridge: f64,
    centers: Option<Points>,
) -> Result<ModelRef> {
    check_training(cfg, data, ridge)?;
    let y = data.labels()?;
    if y.iter().all(|v| *v == y[0]) {
        return constant_model(ModelKind::KernelRidgeRegressor, cfg, data.dim(), y[0], OutputKind::Real);
    }
    let targets = DMatrix::from_column_slice(y.len(), 1, y);
    let coef = fit(cfg, &data.x, &targets, centers.as_ref(), ridge)?;
    let centers = centers.unwrap_or_else(|| data.x.clone());
    ridge_model(ModelKind::KernelRidgeRegressor, cfg, &centers, &coef, Vec::new(), OutputKind::Real)
}

fn check_training(cfg: &KernelConfig, data: &Dataset, ridge: f64) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    if !(ridge.is_finite() && ridge > 0.0) {
        return Err(Error::input(format!("ridge must be positive, got {ridge}")));
    }
    Ok(())
}

fn constant_model(
    kind: ModelKind,
    cfg: &KernelConfig,
    dim: usize,
    value: f64,
    output: OutputKind,
) -> Result<ModelRef> {
    let params = RidgeParams {
        kernel: *cfg,
        centers: Vec::new(),
        coef: Vec::new(),
        classes: if output == OutputKind::ClassIndex { vec![value] } else { Vec::new() },
        constant: Some(value),
    };
    ModelRef::encode(kind, &params, dim, output)
}

fn ridge_model(
    kind: ModelKind,
    cfg: &KernelConfig,
    centers: &Points,
    coef: &DMatrix<f64>,
    classes: Vec<f64>,
    output: OutputKind,
) -> Result<ModelRef> {
    let params = RidgeParams {
        kernel: *cfg,
        centers: centers.to_rows(),
        coef: coef.column_iter().map(|c| c.iter().copied().collect()).collect(),
        classes,
        constant: None,
    };
    ModelRef::encode(kind, &params, centers.dim(), output)
}

/// One-vs-rest kernel ridge classifier with the training points as centers.
pub fn train_krc(cfg: &KernelConfig, data: &Dataset, ridge: f64) -> Result<ModelRef> {
    train_classifier(cfg, data, ridge, None)
}

/// Kernel ridge regressor with the training points as centers.
pub fn train_krr(cfg: &KernelConfig, data: &Dataset, ridge: f64) -> Result<ModelRef> {
    train_regressor(cfg, data, ridge, None)
}

/// Classifier whose basis centers are k-means centroids rather than
/// training rows, so the serialized model holds no raw example.
pub fn train_krc_compact(
    cfg: &KernelConfig,
    data: &Dataset,
    ridge: f64,
    n_centers: usize,
    seed: u64,
) -> Result<ModelRef> {
    let centers = constructed_centers(&data.x, n_centers, seed)?;
    train_classifier(cfg, data, ridge, Some(centers))
}

pub fn train_krr_compact(
    cfg: &KernelConfig,
    data: &Dataset,
    ridge: f64,
    n_centers: usize,
    seed: u64,
) -> Result<ModelRef> {
    let centers = constructed_centers(&data.x, n_centers, seed)?;
    train_regressor(cfg, data, ridge, Some(centers))
}

/// k-means centroids of `x`, minus any centroid that coincides with a row
/// of `x` (a singleton cluster would otherwise copy a raw example).
fn constructed_centers(x: &Points, n_centers: usize, seed: u64) -> Result<Points> {
    if n_centers == 0 {
        return Err(Error::input("compact model needs at least one center"));
    }
    let c = kmeans::kmeans(x, n_centers.min(x.len()), kmeans::DEFAULT_MAX_ITER, seed)?;
    let keep: Vec<usize> = (0..c.len())
        .filter(|&i| x.rows().all(|r| r != c.row(i)))
        .collect();
    if keep.is_empty() {
        return Err(Error::input("every k-means center coincides with a training row"));
    }
    Ok(c.select(&keep))
}
