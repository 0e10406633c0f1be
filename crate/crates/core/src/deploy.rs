//! Deployment phase: reuse pooled models on an unlabeled test set.
//!
//! Two modes, chosen by the caller:
//!
//! * **task-recurrent**: the test distribution is one of the providers'.
//!   The entry whose specification is closest in MMD predicts every point.
//! * **instance-recurrent**: the test distribution is a mixture of the
//!   providers'. Mixture weights are estimated in the RKHS, a labelled mimic
//!   sample is herded from the specifications, and a selector trained on it
//!   routes each test point to one model.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::herding::{HerdOptions, HerdState};
use crate::kernel::KernelConfig;
use crate::linalg;
use crate::market::Pool;
use crate::models::{self, Model, ModelRef, DEFAULT_RIDGE};
use crate::par::{self, Execution};
use crate::rkme::{inner_with, self_inner_with, Embedding};

/// Ridge added to `H` before solving for the mixture weights.
pub const WEIGHT_RIDGE: f64 = 1e-8;
/// Condition number of `H` above which the weights are flagged.
pub const ILL_CONDITIONED: f64 = 1e10;
pub const MAX_MIMIC_SIZE: usize = 2000;

/// How the unconstrained weight solution is mapped onto the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Zero the negative entries, then rescale to sum 1.
    #[default]
    ClipRenormalize,
    /// Euclidean projection of the raw solution onto the simplex.
    Euclidean,
    /// Exact minimiser of the RKHS residual over the simplex.
    ConstrainedQp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub w: Vec<f64>,
    pub raw_w: Vec<f64>,
    /// `|mu_test - sum_i w_i Phi_i|^2`
    pub residual: f64,
    pub condition: f64,
    /// `H` is numerically degenerate (near-duplicate specifications).
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimicSample {
    pub x: Points,
    /// Pool entry index each point was herded from.
    pub provider: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMatch {
    pub index: usize,
    pub mmd: Vec<f64>,
}

/// RKHS quantities shared by matching and weight estimation.
struct Moments {
    /// `<mu_test, mu_test>`
    tt: f64,
    /// `H[i][j] = <Phi_i, Phi_j>`
    h: DMatrix<f64>,
    /// `C[i] = <mu_test, Phi_i> = 1/N sum_n Phi_i(x_n)`
    c: Vec<f64>,
}

impl Moments {
    fn compute(pool: &Pool, test: &Dataset) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::input("the learnware pool is empty"));
        }
        if test.is_empty() {
            return Err(Error::input("test set is empty"));
        }
        let cfg = pool.kernel();
        let entries = pool.entries();
        for e in entries {
            test.x.check_dim(e.spec.dim())?;
        }
        let exec = Execution::default();
        let t = Embedding::uniform(&test.x);
        let tt = self_inner_with(cfg, t, exec);
        let c = par::map(entries.len(), |i| inner_with(cfg, t, e(entries, i), exec))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        let n = entries.len();
        let rows = par::map(n, |i| -> Result<Vec<f64>> {
            (0..n)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => Ok(0.0),
                    std::cmp::Ordering::Equal => Ok(self_inner_with(cfg, e(entries, i), exec)),
                    std::cmp::Ordering::Greater => inner_with(cfg, e(entries, i), e(entries, j), exec),
                })
                .collect()
        });
        let mut h = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row?.into_iter().enumerate().skip(i) {
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(Moments { tt, h, c })
    }

    fn mmd(&self, i: usize) -> f64 {
        (self.tt + self.h[(i, i)] - 2.0 * self.c[i]).max(0.0)
    }

    fn residual(&self, w: &[f64]) -> f64 {
        let wc: f64 = w.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        (self.tt - 2.0 * wc + linalg::quad_form(&self.h, w)).max(0.0)
    }
}

fn e(entries: &[crate::market::LearnwareEntry], i: usize) -> Embedding<'_> {
    Embedding::from(&entries[i].spec)
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the entry closest to the test sample in MMD (ties to the lowest
/// index), plus every per-entry squared MMD.
pub fn match_task_recurrent(pool: &Pool, test: &Dataset) -> Result<TaskMatch> {
    let m = Moments::compute(pool, test)?;
    let mmd: Vec<f64> = (0..pool.len()).map(|i| m.mmd(i)).collect();
    Ok(TaskMatch { index: argmin(&mmd), mmd })
}

pub fn estimate_weights(pool: &Pool, test: &Dataset) -> Result<MixtureWeights> {
    estimate_weights_with(pool, test, Projection::default())
}

/// Mixture weights minimising `|mu_test - sum_i w_i Phi_i|^2`: solves
/// `(H + ridge I) raw_w = C` and maps `raw_w` onto the simplex.
pub fn estimate_weights_with(pool: &Pool, test: &Dataset, projection: Projection) -> Result<MixtureWeights> {
    let m = Moments::compute(pool, test)?;
    weights_from_moments(&m, projection)
}

fn weights_from_moments(m: &Moments, projection: Projection) -> Result<MixtureWeights> {
    let raw_w = linalg::solve_ridge_vec(&m.h, &m.c, WEIGHT_RIDGE)?;
    let w = match projection {
        Projection::ClipRenormalize => clip_renormalize(&raw_w),
        Projection::Euclidean => project_simplex(&raw_w),
        Projection::ConstrainedQp => simplex_qp(&m.h, &m.c, &project_simplex(&raw_w)),
    };
    let condition = linalg::condition_number(&m.h);
    Ok(MixtureWeights {
        residual: m.residual(&w),
        w,
        raw_w,
        condition,
        ill_conditioned: condition.is_nan() || condition >= ILL_CONDITIONED,
    })
}

pub fn clip_renormalize(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    if s > 0.0 {
        clipped.iter().map(|v| v / s).collect()
    } else {
        // nothing positive survives: fall back to the best vertex
        let mut best = 0;
        for (i, v) in raw.iter().enumerate() {
            if *v > raw[best] {
                best = i;
            }
        }
        (0..raw.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (k + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projected gradient for `min w'Hw - 2C'w` over the simplex.
fn simplex_qp(h: &DMatrix<f64>, c: &[f64], start: &[f64]) -> Vec<f64> {
    let lmax = h.clone().symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    if lmax <= 0.0 {
        return start.to_vec();
    }
    let step = 1.0 / (2.0 * lmax);
    let mut w = start.to_vec();
    for _ in 0..20_000 {
        let hw = h * nalgebra::DVector::from_column_slice(&w);
        let trial: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(i, wi)| wi - step * 2.0 * (hw[i] - c[i]))
            .collect();
        let next = project_simplex(&trial);
        let delta: f64 = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        w = next;
        if delta < 1e-15 {
            break;
        }
    }
    w
}

fn stream_seed(seed: u64, provider: usize) -> u64 {
    // splitmix64 finaliser over (seed, provider)
    let mut z = seed ^ (provider as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Categorical draws of provider indices according to `w`.
pub fn draw_providers(w: &[f64], size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::input("mimic sample size must be at least 1"));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::input("mixture weights must be finite and non-negative"));
    }
    let dist = WeightedIndex::new(w).map_err(|_| Error::input("mixture weights are all zero"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..size).map(|_| dist.sample(&mut rng)).collect())
}

/// Herds a labelled sample that mimics `sum_i w_i P_i`.
///
/// Provider labels are drawn first; each provider then gets its own herding
/// stream (seeded from `(opts.seed, index)`), so a provider's points do not
/// depend on how draws from other providers interleave.
pub fn generate_mimic(pool: &Pool, w: &[f64], size: usize, opts: &HerdOptions) -> Result<MimicSample> {
    if w.len() != pool.len() {
        return Err(Error::input(format!("{} weights for {} pool entries", w.len(), pool.len())));
    }
    let labels = draw_providers(w, size, opts.seed)?;
    let mut counts = vec![0usize; pool.len()];
    for &l in &labels {
        counts[l] += 1;
    }
    let entries = pool.entries();
    let streams = par::map(entries.len(), |i| -> Result<Points> {
        let mut state = HerdState::new(&entries[i].spec);
        let stream_opts = HerdOptions { seed: stream_seed(opts.seed, i), ..*opts };
        for _ in 0..counts[i] {
            state.next(&stream_opts)?;
        }
        Ok(state.into_drawn())
    })
    .into_iter()
    .collect::<Result<Vec<Points>>>()?;

    let mut next = vec![0usize; entries.len()];
    let mut x = Points::empty(entries[0].spec.dim());
    for &l in &labels {
        x.push(streams[l].row(next[l]))?;
        next[l] += 1;
    }
    Ok(MimicSample { x, provider: labels })
}

/// Kernel ridge classifier from points to pool entry indices.
pub fn train_selector(cfg: &KernelConfig, sample: &MimicSample, ridge: f64) -> Result<ModelRef> {
    if sample.x.is_empty() {
        return Err(Error::input("mimic sample is empty"));
    }
    let y = sample.provider.iter().map(|&p| p as f64).collect();
    let data = Dataset::new(sample.x.clone(), Some(y))?;
    models::train_krc(cfg, &data, ridge)
}

/// `20 * c * classes`, capped; `classes` defaults to 10 when unknown.
pub fn default_mimic_size(pool_size: usize, classes: Option<usize>) -> usize {
    (20 * pool_size * classes.unwrap_or(10)).clamp(1, MAX_MIMIC_SIZE)
}

fn pool_classes(pool: &Pool) -> Option<usize> {
    pool.entries()
        .iter()
        .filter_map(|e| match e.model.load() {
            Ok(Model::KernelRidge(m)) if !m.classes().is_empty() => Some(m.classes().len()),
            _ => None,
        })
        .max()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOptions {
    /// `None` picks [`default_mimic_size`].
    pub mimic_size: Option<usize>,
    pub seed: u64,
    pub herd: HerdOptions,
    /// Kernel of the selector; defaults to the pool kernel.
    pub selector_kernel: Option<KernelConfig>,
    pub selector_ridge: f64,
    pub projection: Projection,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        InstanceOptions {
            mimic_size: None,
            seed: 0,
            herd: HerdOptions::default(),
            selector_kernel: None,
            selector_ridge: DEFAULT_RIDGE,
            projection: Projection::default(),
        }
    }
}

/// Machine-readable summary written next to the predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub w: Vec<f64>,
    pub raw_w: Vec<f64>,
    pub residual: f64,
    pub per_entry_mmd: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Deployment {
    pub predictions: Vec<f64>,
    /// Pool entry index used for each test point.
    pub chosen: Vec<usize>,
    pub per_entry_mmd: Vec<f64>,
    pub weights: MixtureWeights,
    pub selector: Option<ModelRef>,
    pub mimic: Option<MimicSample>,
}

impl Deployment {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            w: self.weights.w.clone(),
            raw_w: self.weights.raw_w.clone(),
            residual: self.weights.residual,
            per_entry_mmd: self.per_entry_mmd.clone(),
        }
    }
}

/// Runs each entry's model on the test rows routed to it.
fn predict_routed(pool: &Pool, x: &Points, chosen: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    for (i, entry) in pool.entries().iter().enumerate() {
        let idx: Vec<usize> = (0..x.len()).filter(|&n| chosen[n] == i).collect();
        if idx.is_empty() {
            continue;
        }
        let preds = models::predict(&entry.model, &x.select(&idx))?;
        for (n, p) in idx.into_iter().zip(preds) {
            out[n] = p;
        }
    }
    Ok(out)
}

pub fn deploy_task_recurrent(pool: &Pool, test: &Dataset) -> Result<Deployment> {
    let m = Moments::compute(pool, test)?;
    let per_entry_mmd: Vec<f64> = (0..pool.len()).map(|i| m.mmd(i)).collect();
    let index = argmin(&per_entry_mmd);
    let weights = weights_from_moments(&m, Projection::default())?;
    let predictions = models::predict(&pool.entries()[index].model, &test.x)?;
    Ok(Deployment {
        predictions,
        chosen: vec![index; test.len()],
        per_entry_mmd,
        weights,
        selector: None,
        mimic: None,
    })
}

pub fn deploy_instance_recurrent(pool: &Pool, test: &Dataset, opts: &InstanceOptions) -> Result<Deployment> {
    let m = Moments::compute(pool, test)?;
    let per_entry_mmd: Vec<f64> = (0..pool.len()).map(|i| m.mmd(i)).collect();
    let weights = weights_from_moments(&m, opts.projection)?;
    let size = opts
        .mimic_size
        .unwrap_or_else(|| default_mimic_size(pool.len(), pool_classes(pool)));
    let herd = HerdOptions { seed: opts.seed, ..opts.herd };
    let mimic = generate_mimic(pool, &weights.w, size, &herd)?;
    let selector_kernel = opts.selector_kernel.unwrap_or(*pool.kernel());
    let selector = train_selector(&selector_kernel, &mimic, opts.selector_ridge)?;
    let chosen: Vec<usize> = models::predict(&selector, &test.x)?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let predictions = predict_routed(pool, &test.x, &chosen)?;
    Ok(Deployment {
        predictions,
        chosen,
        per_entry_mmd,
        weights,
        selector: Some(selector),
        mimic: Some(mimic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{EntryMeta, LearnwareEntry};
    use crate::models::{train_krc_compact, OutputKind};
    use crate::rkme::{mmd_sq, Rkme, RkmeMeta};

    fn cfg() -> KernelConfig {
        KernelConfig::gaussian(1.0).unwrap()
    }

    fn spec(rows: &[[f64; 2]], beta: Vec<f64>) -> Rkme {
        Rkme::new(
            cfg(),
            beta,
            Points::from_rows(rows).unwrap(),
            RkmeMeta { source_size: 10, objective: 0.0, created: None },
        )
        .unwrap()
    }

    fn constant_model(class: f64) -> ModelRef {
        let x = Points::from_rows(&[[0.1, 0.2]]).unwrap();
        models::train_krc(&cfg(), &Dataset::new(x, Some(vec![class])).unwrap(), 1e-3).unwrap()
    }

    fn pool_of(specs: Vec<Rkme>) -> Pool {
        let mut pool = Pool::in_memory(cfg()).unwrap();
        for (i, s) in specs.into_iter().enumerate() {
            pool.insert(LearnwareEntry {
                id: format!("e{i}"),
                spec: s,
                model: constant_model(i as f64),
                meta: EntryMeta::new("p", "t"),
            })
            .unwrap();
        }
        pool
    }

    fn test_set(rows: &[[f64; 2]]) -> Dataset {
        Dataset::unlabeled(Points::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn single_entry_pool() {
        let pool = pool_of(vec![spec(&[[0.0, 0.0]], vec![1.0])]);
        let t = test_set(&[[3.0, 1.0], [0.0, 0.5]]);
        assert_eq!(match_task_recurrent(&pool, &t).unwrap().index, 0);
        let w = estimate_weights(&pool, &t).unwrap();
        assert_eq!(w.w, vec![1.0]);
        let d = deploy_instance_recurrent(&pool, &t, &InstanceOptions { mimic_size: Some(10), ..Default::default() })
            .unwrap();
        assert_eq!(d.predictions, models::predict(&pool.entries()[0].model, &t.x).unwrap());
        assert_eq!(d.chosen, vec![0, 0]);
    }

    #[test]
    fn identical_specs_tie_to_first() {
        let s = spec(&[[1.0, 0.0], [0.0, 1.0]], vec![0.5, 0.5]);
        let pool = pool_of(vec![s.clone(), s]);
        let t = test_set(&[[0.5, 0.5]]);
        let m = match_task_recurrent(&pool, &t).unwrap();
        assert_eq!(m.index, 0);
        assert_eq!(m.mmd[0], m.mmd[1]);
    }

    #[test]
    fn per_entry_values_equal_mmd_sq() {
        let pool = pool_of(vec![
            spec(&[[0.0, 0.0], [1.0, 0.0]], vec![0.7, 0.3]),
            spec(&[[3.0, 3.0]], vec![1.0]),
        ]);
        let t = test_set(&[[0.1, 0.0], [0.9, 0.2], [2.0, 2.5]]);
        let m = match_task_recurrent(&pool, &t).unwrap();
        for (i, v) in m.mmd.iter().enumerate() {
            let direct = mmd_sq((&t).into(), (&pool.entries()[i].spec).into()).unwrap();
            assert_eq!(*v, direct);
        }
        assert!(pool_of(vec![]).is_empty());
        assert!(match_task_recurrent(&pool_of(vec![]), &t).is_err());
    }

    #[test]
    fn simplex_projections() {
        let c = clip_renormalize(&[0.6, -0.2, 0.2]);
        assert!((c[0] - 0.75).abs() < 1e-15 && c[1] == 0.0 && (c[2] - 0.25).abs() < 1e-15);
        assert_eq!(clip_renormalize(&[-1.0, -0.5]), vec![0.0, 1.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.2, 0.5]);
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weight_residual_beats_vertices_and_uniform() {
        let specs = vec![
            spec(&[[0.0, 0.0], [0.5, 0.0]], vec![0.5, 0.5]),
            spec(&[[2.0, 0.0]], vec![1.0]),
            spec(&[[0.0, 2.0], [0.3, 2.2]], vec![0.4, 0.6]),
        ];
        let pool = pool_of(specs);
        let t = test_set(&[[0.1, 0.1], [2.1, -0.1], [0.4, 0.0], [0.0, 2.1], [1.9, 0.2]]);
        let m = Moments::compute(&pool, &t).unwrap();
        for proj in [Projection::ClipRenormalize, Projection::Euclidean, Projection::ConstrainedQp] {
            let w = weights_from_moments(&m, proj).unwrap();
            assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.w.iter().all(|v| *v >= 0.0));
            let mut probes: Vec<Vec<f64>> =
                (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            probes.push(vec![1.0 / 3.0; 3]);
            for p in probes {
                assert!(w.residual <= m.residual(&p) + 1e-12, "{proj:?}");
            }
        }
    }

    #[test]
    fn mimic_labels_and_determinism() {
        let pool = pool_of(vec![
            spec(&[[0.0, 0.0]], vec![1.0]),
            spec(&[[4.0, 0.0]], vec![1.0]),
        ]);
        let opts = HerdOptions { seed: 7, ..Default::default() };
        let s = generate_mimic(&pool, &[0.0, 1.0], 20, &opts).unwrap();
        assert!(s.provider.iter().all(|&p| p == 1));
        let a = generate_mimic(&pool, &[0.4, 0.6], 30, &opts).unwrap();
        let b = generate_mimic(&pool, &[0.4, 0.6], 30, &opts).unwrap();
        assert_eq!(a, b);
        assert!(matches!(generate_mimic(&pool, &[0.0, 0.0], 5, &opts), Err(Error::Input(_))));
        assert!(generate_mimic(&pool, &[1.0], 5, &opts).is_err());
        // a provider's herded stream is unaffected by the others
        let first_of = |s: &MimicSample, p: usize| {
            let i = s.provider.iter().position(|&q| q == p).unwrap();
            s.x.row(i).to_vec()
        };
        let c = generate_mimic(&pool, &[0.9, 0.1], 30, &opts).unwrap();
        assert_eq!(first_of(&a, 1), first_of(&c, 1));
    }

    #[test]
    fn provider_frequencies_converge() {
        let w = [0.7, 0.3, 0.0];
        let labels = draw_providers(&w, 5000, 3).unwrap();
        for (i, wi) in w.iter().enumerate() {
            let f = labels.iter().filter(|&&l| l == i).count() as f64 / 5000.0;
            assert!((f - wi).abs() <= 0.02, "provider {i}: {f}");
        }
    }

    #[test]
    fn selector_examples() {
        let x = Points::from_rows(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]).unwrap();
        let single = MimicSample { x: x.clone(), provider: vec![2; 4] };
        let g = train_selector(&cfg(), &single, 1e-3).unwrap();
        assert_eq!(models::predict(&g, &Points::from_rows(&[[-9.0, 3.0]]).unwrap()).unwrap(), vec![2.0]);
        let two = MimicSample { x: x.clone(), provider: vec![0, 0, 1, 1] };
        let g = train_selector(&cfg(), &two, 1e-3).unwrap();
        assert_eq!(models::predict(&g, &x).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(g.output, OutputKind::ClassIndex);
    }

    #[test]
    fn instance_deployment_routes_by_region() {
        let left = Dataset::new(
            Points::from_rows(&[[-2.0, 0.0], [-2.2, 0.3], [-1.8, -0.2], [-2.1, 0.1]]).unwrap(),
            Some(vec![0.0, 0.0, 1.0, 1.0]),
        )
        .unwrap();
        let mut pool = Pool::in_memory(cfg()).unwrap();
        let opts = crate::rkme::ReduceOptions::default();
        pool.upload("left", &left, train_krc_compact(&cfg(), &left, 1e-3, 2, 0).unwrap(), 2, EntryMeta::new("a", "t"), &opts)
            .unwrap();
        pool.insert(LearnwareEntry {
            id: "right".into(),
            spec: spec(&[[2.0, 0.0]], vec![1.0]),
            model: constant_model(7.0),
            meta: EntryMeta::new("b", "t"),
        })
        .unwrap();
        let t = test_set(&[[-2.0, 0.1], [2.0, 0.1], [2.1, -0.1]]);
        let o = InstanceOptions { mimic_size: Some(40), seed: 1, ..Default::default() };
        let d = deploy_instance_recurrent(&pool, &t, &o).unwrap();
        assert_eq!(d.chosen, vec![0, 1, 1]);
        assert_eq!(&d.predictions[1..], &[7.0, 7.0]);
        let again = deploy_instance_recurrent(&pool, &t, &o).unwrap();
        assert_eq!(d.predictions, again.predictions);
        assert_eq!(d.mimic, again.mimic);
        let diag = serde_json::to_value(d.diagnostics()).unwrap();
        for key in ["w", "raw_w", "residual", "per_entry_mmd"] {
            assert!(diag.get(key).is_some());
        }
    }

    #[test]
    fn mimic_size_default() {
        assert_eq!(default_mimic_size(3, Some(2)), 120);
        assert_eq!(default_mimic_size(3, None), 600);
        assert_eq!(default_mimic_size(50, None), MAX_MIMIC_SIZE);
    }
}
