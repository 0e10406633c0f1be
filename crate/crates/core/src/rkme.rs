//! Kernel mean embeddings, RKHS distances and reduced-set construction.
//!
//! An [`Rkme`] is a weighted set of constructed points `(beta, Z)` whose
//! embedding `sum_m beta_m k(z_m, .)` approximates the empirical embedding of
//! a private dataset. It is built by alternating a closed-form `beta` solve
//! with a gradient step on `Z`, starting from k-means centers.

use chrono::{DateTime, Utc};
use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::kmeans;
use crate::linalg;
use crate::par::{self, Execution};

/// Ridge added to the reduced-set Gram matrix before solving for `beta`.
pub const BETA_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
enum Weights<'a> {
    Uniform,
    Explicit(&'a [f64]),
}

/// A weighted point set viewed as an element of the RKHS.
///
/// Raw datasets carry uniform weights `1/N`; specifications carry `beta`.
#[derive(Debug, Clone, Copy)]
pub struct Embedding<'a> {
    points: &'a Points,
    weights: Weights<'a>,
    kernel: Option<KernelConfig>,
}

impl<'a> Embedding<'a> {
    pub fn uniform(points: &'a Points) -> Self {
        Embedding { points, weights: Weights::Uniform, kernel: None }
    }

    pub fn weighted(points: &'a Points, weights: &'a [f64]) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::input(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        Ok(Embedding { points, weights: Weights::Explicit(weights), kernel: None })
    }

    pub fn points(&self) -> &'a Points {
        self.points
    }

    pub fn kernel(&self) -> Option<KernelConfig> {
        self.kernel
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match self.weights {
            Weights::Uniform => 1.0 / self.points.len() as f64,
            Weights::Explicit(w) => w[i],
        }
    }

    /// Same points with the same weights, so the two embeddings are equal.
    fn same_as(&self, other: &Embedding<'_>) -> bool {
        self.points == other.points && (0..self.points.len()).all(|i| self.weight(i) == other.weight(i))
    }

    /// Evaluates the embedding as a function, `sum_i w_i k(u_i, x)`.
    pub fn eval(&self, cfg: &KernelConfig, x: &[f64]) -> f64 {
        self.points
            .rows()
            .enumerate()
            .map(|(i, u)| self.weight(i) * cfg.eval_unchecked(u, x))
            .sum()
    }
}

impl<'a> From<&'a Dataset> for Embedding<'a> {
    fn from(d: &'a Dataset) -> Self {
        Embedding::uniform(&d.x)
    }
}

impl<'a> From<&'a Points> for Embedding<'a> {
    fn from(p: &'a Points) -> Self {
        Embedding::uniform(p)
    }
}

impl<'a> From<&'a Rkme> for Embedding<'a> {
    fn from(s: &'a Rkme) -> Self {
        Embedding { points: &s.z, weights: Weights::Explicit(&s.beta), kernel: Some(s.kernel) }
    }
}

/// RKHS inner product `<a, b>` between two embeddings.
pub fn inner(cfg: &KernelConfig, a: Embedding<'_>, b: Embedding<'_>) -> Result<f64> {
    inner_with(cfg, a, b, Execution::default())
}

pub fn inner_with(
    cfg: &KernelConfig,
    a: Embedding<'_>,
    b: Embedding<'_>,
    exec: Execution,
) -> Result<f64> {
    b.points.check_dim(a.points.dim())?;
    let rows = exec.map(a.points.len(), |i| {
        let u = a.points.row(i);
        let s: f64 = b
            .points
            .rows()
            .enumerate()
            .map(|(j, v)| b.weight(j) * cfg.eval_unchecked(u, v))
            .sum();
        a.weight(i) * s
    });
    Ok(rows.iter().sum())
}

/// `<a, a>` using the symmetry of the kernel (half the evaluations).
pub fn self_inner_with(cfg: &KernelConfig, a: Embedding<'_>, exec: Execution) -> f64 {
    let p = a.points;
    let rows = exec.map(p.len(), |i| {
        let u = p.row(i);
        let off: f64 = (0..i).map(|j| a.weight(j) * cfg.eval_unchecked(u, p.row(j))).sum();
        let wi = a.weight(i);
        wi * (wi + 2.0 * off)
    });
    rows.iter().sum()
}

/// `<mu(X), mu(X')>` for two raw samples with uniform weights.
pub fn empirical_kme_inner(cfg: &KernelConfig, x: &Points, x2: &Points) -> Result<f64> {
    if x.is_empty() || x2.is_empty() {
        return Err(Error::input("empirical embedding of an empty sample"));
    }
    inner(cfg, Embedding::uniform(x), Embedding::uniform(x2))
}

/// Squared maximum mean discrepancy `|mu_a - mu_b|^2`.
///
/// The kernel is taken from whichever embedding carries one (specifications
/// do, raw samples do not); two different kernels are a configuration error.
pub fn mmd_sq(a: Embedding<'_>, b: Embedding<'_>) -> Result<f64> {
    let cfg = match (a.kernel, b.kernel) {
        (Some(ka), Some(kb)) if ka != kb => {
            return Err(Error::Config(format!("embeddings use different kernels: {ka:?} vs {kb:?}")))
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => {
            return Err(Error::Config("no kernel attached to either embedding".into()))
        }
    };
    mmd_sq_with(&cfg, a, b)
}

/// Squared MMD under an explicit kernel. Any kernel carried by the
/// embeddings must agree with `cfg`.
pub fn mmd_sq_with(cfg: &KernelConfig, a: Embedding<'_>, b: Embedding<'_>) -> Result<f64> {
    for k in [a.kernel, b.kernel].into_iter().flatten() {
        if k != *cfg {
            return Err(Error::Config(format!("embedding kernel {k:?} differs from {cfg:?}")));
        }
    }
    b.points.check_dim(a.points.dim())?;
    if a.points.is_empty() || b.points.is_empty() {
        return Err(Error::input("empty embedding"));
    }
    if a.same_as(&b) {
        // aa and ab are summed in different orders; avoid a rounding residue
        return Ok(0.0);
    }
    let exec = Execution::default();
    let aa = self_inner_with(cfg, a, exec);
    let bb = self_inner_with(cfg, b, exec);
    let ab = inner_with(cfg, a, b, exec)?;
    let v = aa + bb - 2.0 * ab;
    debug_assert!(v > -1e-9, "negative squared mmd {v}");
    Ok(v.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkmeMeta {
    pub source_size: usize,
    /// Final value of the reduced-set objective.
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<DateTime<Utc>>,
}

/// Reduced kernel mean embedding: `Phi(x) = sum_m beta_m k(z_m, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RkmeRepr")]
pub struct Rkme {
    pub kernel: KernelConfig,
    pub beta: Vec<f64>,
    #[serde(rename = "Z")]
    pub z: Points,
    pub meta: RkmeMeta,
}

#[derive(Deserialize)]
struct RkmeRepr {
    kernel: KernelConfig,
    beta: Vec<f64>,
    #[serde(rename = "Z")]
    z: Points,
    meta: RkmeMeta,
}

impl TryFrom<RkmeRepr> for Rkme {
    type Error = Error;

    fn try_from(r: RkmeRepr) -> Result<Self> {
        Rkme::new(r.kernel, r.beta, r.z, r.meta)
    }
}

impl Rkme {
    pub fn new(kernel: KernelConfig, beta: Vec<f64>, z: Points, meta: RkmeMeta) -> Result<Self> {
        kernel.validate()?;
        if beta.is_empty() {
            return Err(Error::input("reduced set must have at least one point"));
        }
        if beta.len() != z.len() {
            return Err(Error::input(format!("{} weights for {} points", beta.len(), z.len())));
        }
        if !z.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("reduced set contains non-finite values"));
        }
        Ok(Rkme { kernel, beta, z, meta })
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn embedding(&self) -> Embedding<'_> {
        self.into()
    }

    /// `Phi(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(self.embedding().eval(&self.kernel, x))
    }

    /// `|Phi|^2` in the RKHS.
    pub fn norm_sq(&self) -> f64 {
        self_inner_with(&self.kernel, self.embedding(), Execution::default())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    /// Outer iterations (beta solve + Z step).
    pub iters: usize,
    /// Initial gradient step on Z.
    pub eta: f64,
    pub seed: u64,
    /// Stop once an iteration lowers the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    pub max_halvings: usize,
    pub ridge: f64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            iters: 20,
            eta: 0.1,
            seed: 0,
            rel_tol: 1e-6,
            max_halvings: 20,
            ridge: BETA_RIDGE,
        }
    }
}

/// Result of reduced-set construction with its objective trace.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub spec: Rkme,
    /// Objective after the initial beta solve on the k-means centers,
    /// followed by one value per completed outer iteration.
    pub history: Vec<f64>,
}

/// Closed-form `beta` for fixed `Z`: `(K + ridge I)^-1 C`, with
/// `K[n][m] = k(z_n, z_m)` and `C[n] = 1/N sum_m k(z_n, x_m)`.
pub fn update_beta(cfg: &KernelConfig, z: &Points, x: &Points) -> Result<Vec<f64>> {
    update_beta_ridge(cfg, z, x, BETA_RIDGE)
}

pub fn update_beta_ridge(cfg: &KernelConfig, z: &Points, x: &Points, ridge: f64) -> Result<Vec<f64>> {
    if z.is_empty() || x.is_empty() {
        return Err(Error::input("update_beta needs non-empty Z and X"));
    }
    let k = gram(cfg, z, z)?;
    let c = cross_mean(cfg, z, x)?;
    linalg::solve_ridge_vec(&k, &c, ridge)
}

fn cross_mean(cfg: &KernelConfig, z: &Points, x: &Points) -> Result<Vec<f64>> {
    let g = gram(cfg, z, x)?;
    let n = x.len() as f64;
    Ok(g.row_iter().map(|r| r.sum() / n).collect())
}

/// The reduced-set objective `F(beta, Z)` for a fixed dataset.
pub struct Objective<'a> {
    cfg: KernelConfig,
    x: &'a Points,
    xx: f64,
}

impl<'a> Objective<'a> {
    pub fn new(cfg: &KernelConfig, x: &'a Points) -> Self {
        let xx = self_inner_with(cfg, Embedding::uniform(x), Execution::default());
        Objective { cfg: *cfg, x, xx }
    }

    pub fn value(&self, beta: &[f64], z: &Points) -> Result<f64> {
        let k = gram(&self.cfg, z, z)?;
        let c = cross_mean(&self.cfg, z, self.x)?;
        Ok(self.value_parts(beta, &k, &c))
    }

    fn value_parts(&self, beta: &[f64], k: &DMatrix<f64>, c: &[f64]) -> f64 {
        let bc: f64 = beta.iter().zip(c).map(|(b, c)| b * c).sum();
        self.xx + linalg::quad_form(k, beta) - 2.0 * bc
    }

    /// `dF/dz_m` for every row of `Z`, as a matrix shaped like `Z`.
    pub fn grad_z(&self, beta: &[f64], z: &Points) -> Points {
        let d = z.dim();
        let n = self.x.len() as f64;
        let rows = par::map(z.len(), |m| {
            let zm = z.row(m);
            let mut g_zz = vec![0.0; d];
            for (mp, zp) in z.rows().enumerate() {
                if mp != m {
                    self.cfg.accumulate_grad(zm, zp, beta[mp], &mut g_zz);
                }
            }
            let mut g_zx = vec![0.0; d];
            for xr in self.x.rows() {
                // non-differentiable kink (Laplacian at z == x): term dropped
                self.cfg.accumulate_grad(zm, xr, 1.0, &mut g_zx);
            }
            g_zz.iter()
                .zip(&g_zx)
                .map(|(a, b)| 2.0 * beta[m] * (a - b / n))
                .collect::<Vec<f64>>()
        });
        Points::new(rows.concat(), d).expect("gradient rows share Z's dimension")
    }
}

pub fn reduce(cfg: &KernelConfig, x: &Points, m: usize, opts: &ReduceOptions) -> Result<Rkme> {
    reduce_traced(cfg, x, m, opts).map(|r| r.spec)
}

/// Builds an `m`-point reduced embedding of `x`, recording the objective
/// after every outer iteration. The trace is non-increasing by construction:
/// a `beta` refresh or `Z` step that would raise the objective is rejected.
pub fn reduce_traced(
    cfg: &KernelConfig,
    x: &Points,
    m: usize,
    opts: &ReduceOptions,
) -> Result<Reduction> {
    cfg.validate()?;
    if x.is_empty() || !x.is_finite() {
        return Err(Error::input("reduce needs a non-empty finite dataset"));
    }
    if m == 0 || m > x.len() {
        return Err(Error::input(format!(
            "reduced set size must satisfy 1 <= M <= N (M={m}, N={})",
            x.len()
        )));
    }
    if opts.iters == 0 {
        return Err(Error::input("reduce needs at least one iteration"));
    }
    if !(opts.eta.is_finite() && opts.eta > 0.0) {
        return Err(Error::input(format!("step size must be positive, got {}", opts.eta)));
    }

    let objective = Objective::new(cfg, x);
    let mut z = kmeans::kmeans(x, m, kmeans::DEFAULT_MAX_ITER, opts.seed)?;
    let mut beta = update_beta_ridge(cfg, &z, x, opts.ridge)?;
    let mut f = finite(objective.value(&beta, &z)?, "initial objective")?;
    let mut history = vec![f];

    for t in 1..=opts.iters {
        if t > 1 {
            let candidate = update_beta_ridge(cfg, &z, x, opts.ridge)?;
            let fc = finite(objective.value(&candidate, &z)?, "objective after beta update")?;
            if fc <= f {
                beta = candidate;
                f = fc;
            }
        }

        let grad = objective.grad_z(&beta, &z);
        let mut eta = opts.eta;
        for _ in 0..=opts.max_halvings {
            let mut trial = z.clone();
            for (i, row) in grad.rows().enumerate() {
                for (v, g) in trial.row_mut(i).iter_mut().zip(row) {
                    *v -= eta * g;
                }
            }
            let ft = objective.value(&beta, &trial)?;
            if !ft.is_finite() || !trial.is_finite() {
                return Err(Error::Divergence(format!(
                    "objective became non-finite at iteration {t} (eta={eta:e})"
                )));
            }
            if ft <= f {
                z = trial;
                f = ft;
                break;
            }
            eta *= 0.5;
        }

        let prev = *history.last().expect("history starts non-empty");
        history.push(f);
        debug!("reduce: iteration {t} objective {f:.6e}");
        if prev <= 0.0 || (prev - f) < opts.rel_tol * prev {
            break;
        }
    }

    let meta = RkmeMeta { source_size: x.len(), objective: f.max(0.0), created: None };
    Ok(Reduction { spec: Rkme::new(*cfg, beta, z, meta)?, history })
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence(format!("{what} is not finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> KernelConfig {
        KernelConfig::gaussian(0.7).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Points {
        Points::new((0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect(), d).unwrap()
    }

    #[allow(clippy::needless_range_loop)]
    fn double_loop(cfg: &KernelConfig, a: &Points, wa: &[f64], b: &Points, wb: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += wa[i] * wb[j] * cfg.eval(a.row(i), b.row(j)).unwrap();
            }
        }
        s
    }

    #[test]
    fn empirical_inner_examples() {
        let a = Points::from_rows(&[[0.5, 1.0]]).unwrap();
        let b = Points::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(empirical_kme_inner(&cfg(), &a, &a).unwrap(), 1.0);
        let want = cfg().eval(a.row(0), b.row(0)).unwrap();
        assert_eq!(empirical_kme_inner(&cfg(), &a, &b).unwrap(), want);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = (random_points(&mut rng, 5, 3), random_points(&mut rng, 5, 3));
        let u = vec![0.2; 5];
        let oracle = double_loop(&cfg(), &x, &u, &y, &u);
        assert!((empirical_kme_inner(&cfg(), &x, &y).unwrap() - oracle).abs() < 1e-14);
        assert!(empirical_kme_inner(&cfg(), &x, &Points::empty(3)).is_err());
    }

    #[test]
    fn mmd_examples() {
        let x = Points::from_rows(&[[0.0, 0.0]]).unwrap();
        let z = Points::from_rows(&[[1.0, -0.5]]).unwrap();
        let k = cfg().eval(x.row(0), z.row(0)).unwrap();
        let v = mmd_sq_with(&cfg(), (&x).into(), (&z).into()).unwrap();
        assert!((v - (2.0 - 2.0 * k)).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_points(&mut rng, 12, 2);
        assert_eq!(mmd_sq_with(&cfg(), (&data).into(), (&data).into()).unwrap(), 0.0);

        // exact reduced set: Z = X, beta = 1/N
        let spec = Rkme::new(
            cfg(),
            vec![1.0 / 12.0; 12],
            data.clone(),
            RkmeMeta { source_size: 12, objective: 0.0, created: None },
        )
        .unwrap();
        assert!(mmd_sq((&data).into(), (&spec).into()).unwrap() < 1e-15);
        assert_eq!(mmd_sq((&spec).into(), (&spec).into()).unwrap(), 0.0);
    }

    #[test]
    fn mmd_kernel_checks() {
        let p = Points::from_rows(&[[0.0]]).unwrap();
        let meta = RkmeMeta { source_size: 1, objective: 0.0, created: None };
        let s1 = Rkme::new(cfg(), vec![1.0], p.clone(), meta.clone()).unwrap();
        let s2 = Rkme::new(KernelConfig::gaussian(2.0).unwrap(), vec![1.0], p.clone(), meta).unwrap();
        assert!(matches!(mmd_sq((&s1).into(), (&s2).into()), Err(Error::Config(_))));
        assert!(matches!(mmd_sq((&p).into(), (&p).into()), Err(Error::Config(_))));
        assert!(matches!(mmd_sq_with(&cfg(), (&s2).into(), (&p).into()), Err(Error::Config(_))));
        assert_eq!(mmd_sq((&s1).into(), (&s1).into()).unwrap(), 0.0);
    }

    #[test]
    fn beta_exact_representation() {
        let x = Points::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.5], [2.0, 2.0]]).unwrap();
        let beta = update_beta_ridge(&cfg(), &x, &x, 0.0).unwrap();
        for b in beta {
            assert!((b - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn beta_single_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_points(&mut rng, 7, 2);
        let z = Points::from_rows(&[[0.3, -0.2]]).unwrap();
        let c1: f64 = x.rows().map(|r| cfg().eval(z.row(0), r).unwrap()).sum::<f64>() / 7.0;
        let beta = update_beta(&cfg(), &z, &x).unwrap();
        assert!((beta[0] - c1 / (1.0 + BETA_RIDGE)).abs() < 1e-15);
    }

    #[test]
    fn beta_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_points(&mut rng, 30, 2);
        let z = random_points(&mut rng, 4, 2);
        let obj = Objective::new(&cfg(), &x);
        let best = obj.value(&update_beta(&cfg(), &z, &x).unwrap(), &z).unwrap();
        for _ in 0..100 {
            let probe: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(best <= obj.value(&probe, &z).unwrap() + 1e-12);
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_points(&mut rng, 25, 2);
        let z = random_points(&mut rng, 3, 2);
        let beta = vec![0.5, 0.3, 0.25];
        let obj = Objective::new(&cfg(), &x);
        let g = obj.grad_z(&beta, &z);
        let h = 1e-6;
        for m in 0..3 {
            for j in 0..2 {
                let mut zp = z.clone();
                zp.row_mut(m)[j] += h;
                let mut zm = z.clone();
                zm.row_mut(m)[j] -= h;
                let fd = (obj.value(&beta, &zp).unwrap() - obj.value(&beta, &zm).unwrap()) / (2.0 * h);
                assert!((fd - g.row(m)[j]).abs() < 1e-7, "m={m} j={j}: {fd} vs {}", g.row(m)[j]);
            }
        }
    }

    #[test]
    fn reduce_full_size_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_points(&mut rng, 8, 2);
        let spec = reduce(&cfg(), &x, 8, &ReduceOptions::default()).unwrap();
        assert_eq!(spec.len(), 8);
        assert!(spec.meta.objective <= 1e-10, "{}", spec.meta.objective);
    }

    #[test]
    fn reduce_single_atom_improves_on_kmeans() {
        // outliers on one side pull the mean away from where the embedding
        // mass is concentrated
        let mut rows = Vec::new();
        for i in 0..40 {
            let a = i as f64 * std::f64::consts::TAU / 40.0;
            rows.push([0.3 * a.cos(), 0.3 * a.sin()]);
        }
        rows.push([3.0, 0.0]);
        rows.push([3.2, 0.0]);
        let x = Points::from_rows(&rows).unwrap();
        let mean_x = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
        let r = reduce_traced(&KernelConfig::gaussian(1.0).unwrap(), &x, 1, &ReduceOptions::default()).unwrap();
        let last = *r.history.last().unwrap();
        assert!(last < r.history[0]);
        let z = r.spec.z.row(0);
        assert!(z[0] < mean_x && z[1].abs() < 1e-9, "{z:?}");
    }

    #[test]
    fn reduce_errors() {
        let x = Points::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(reduce(&cfg(), &x, 3, &ReduceOptions::default()), Err(Error::Input(_))));
        assert!(reduce(&cfg(), &x, 0, &ReduceOptions::default()).is_err());
        let bad = ReduceOptions { eta: 0.0, ..Default::default() };
        assert!(reduce(&cfg(), &x, 1, &bad).is_err());
        let x = Points::from_rows(&[[0.0], [1.0], [5.0], [6.0]]).unwrap();
        let huge = ReduceOptions { eta: 1e308, max_halvings: 0, ..Default::default() };
        assert!(matches!(reduce(&cfg(), &x, 2, &huge), Err(Error::Divergence(_))));
    }

    #[test]
    fn rkme_eval_examples() {
        let meta = RkmeMeta { source_size: 3, objective: 0.0, created: None };
        let z = Points::from_rows(&[[1.0, 2.0]]).unwrap();
        let s = Rkme::new(cfg(), vec![1.0], z, meta.clone()).unwrap();
        assert_eq!(s.eval(&[1.0, 2.0]).unwrap(), 1.0);
        assert!(s.eval(&[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = random_points(&mut rng, 4, 2);
        let zero = Rkme::new(cfg(), vec![0.0; 4], z.clone(), meta.clone()).unwrap();
        assert_eq!(zero.eval(&[0.1, 0.1]).unwrap(), 0.0);
        let beta = vec![0.4, -0.1, 0.5, 0.2];
        let s = Rkme::new(cfg(), beta.clone(), z.clone(), meta).unwrap();
        let x = [0.3, -0.7];
        let want: f64 = (0..4).map(|m| beta[m] * cfg().eval(z.row(m), &x).unwrap()).sum();
        assert!((s.eval(&x).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn rkme_json_shape() {
        let z = Points::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let s = Rkme::new(cfg(), vec![0.6, 0.4], z, RkmeMeta { source_size: 9, objective: 0.01, created: None })
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["kernel"]["family"], "gaussian");
        assert_eq!(v["Z"][1][1], -1.0);
        assert_eq!(v["meta"]["source_size"], 9);
        assert_eq!(Rkme::from_json(&s.to_json().unwrap()).unwrap(), s);
        let broken = r#"{"kernel":{"family":"gaussian","gamma":1.0},"beta":[1.0,2.0],"Z":[[0.0]],"meta":{"source_size":1,"objective":0.0}}"#;
        assert!(Rkme::from_json(broken).is_err());
    }
}
