//! Toy tasks: providers sampling two-component Gaussian mixtures whose means
//! sit on either side of a circle, labelled by a shared inside/outside rule.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub n_providers: usize,
    /// Radius of the labelling circle.
    pub radius: f64,
    /// Radii of the inner and outer mixture means.
    pub inner: f64,
    pub outer: f64,
    pub sigma: f64,
    pub samples_per_provider: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_providers: 3,
            radius: 1.0,
            inner: 0.6,
            outer: 1.4,
            sigma: 0.25,
            samples_per_provider: 300,
            seed: 0,
        }
    }
}

/// The global labelling rule: 0 inside the circle, 1 on or outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleRule {
    pub radius: f64,
}

impl CircleRule {
    pub fn label(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < self.radius * self.radius {
            0.0
        } else {
            1.0
        }
    }

    pub fn labels(&self, x: &Points) -> Vec<f64> {
        x.rows().map(|r| self.label(r)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Toy {
    pub providers: Vec<Dataset>,
    pub rule: CircleRule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestMode {
    /// All points from one provider's distribution.
    TaskRecurrent(usize),
    /// Provider drawn per point from these mixture weights.
    InstanceRecurrent(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ToyTest {
    /// Features with ground-truth labels.
    pub data: Dataset,
    /// Provider each point was drawn from.
    pub provider: Vec<usize>,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_providers == 0 || self.samples_per_provider == 0 {
            return Err(Error::input("toy config needs providers and samples"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::input("sigma must be finite and non-negative"));
        }
        if !(0.0 <= self.inner && self.inner < self.radius && self.radius < self.outer) {
            return Err(Error::input("mixture means must straddle the circle: inner < radius < outer"));
        }
        Ok(())
    }

    pub fn rule(&self) -> CircleRule {
        CircleRule { radius: self.radius }
    }

    fn angle(&self, provider: usize) -> f64 {
        FRAC_PI_2 + TAU * provider as f64 / self.n_providers as f64
    }

    /// The two component means of a provider (inner first).
    pub fn means(&self, provider: usize) -> [[f64; 2]; 2] {
        let (s, c) = self.angle(provider).sin_cos();
        [[self.inner * c, self.inner * s], [self.outer * c, self.outer * s]]
    }

    fn draw(&self, provider: usize, rng: &mut impl Rng) -> [f64; 2] {
        let mean = self.means(provider)[usize::from(rng.random_bool(0.5))];
        [
            mean[0] + self.sigma * rng.sample::<f64, _>(StandardNormal),
            mean[1] + self.sigma * rng.sample::<f64, _>(StandardNormal),
        ]
    }

    fn labelled(&self, rows: Vec<[f64; 2]>) -> Result<Dataset> {
        let x = Points::from_rows(&rows)?;
        let y = self.rule().labels(&x);
        Dataset::new(x, Some(y))
    }
}

pub fn make_toy(cfg: &ToyConfig) -> Result<Toy> {
    cfg.validate()?;
    let providers = (0..cfg.n_providers)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let rows = (0..cfg.samples_per_provider).map(|_| cfg.draw(i, &mut rng)).collect();
            cfg.labelled(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Toy { providers, rule: cfg.rule() })
}

pub fn make_test(cfg: &ToyConfig, mode: &TestMode, n: usize, seed: u64) -> Result<ToyTest> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::input("test size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let provider: Vec<usize> = match mode {
        TestMode::TaskRecurrent(j) => {
            if *j >= cfg.n_providers {
                return Err(Error::input(format!("provider {j} out of range")));
            }
            vec![*j; n]
        }
        TestMode::InstanceRecurrent(w) => {
            let sum: f64 = w.iter().sum();
            if w.len() != cfg.n_providers
                || w.iter().any(|v| !v.is_finite() || *v < 0.0)
                || (sum - 1.0).abs() > 1e-6
            {
                return Err(Error::input(format!(
                    "mixture weights must be a point of the {}-simplex, got {w:?}",
                    cfg.n_providers
                )));
            }
            let dist = WeightedIndex::new(w).map_err(|e| Error::input(e.to_string()))?;
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    let rows = provider.iter().map(|&p| cfg.draw(p, &mut rng)).collect();
    Ok(ToyTest { data: cfg.labelled(rows)?, provider })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_collapses_to_means() {
        let cfg = ToyConfig { sigma: 0.0, samples_per_provider: 50, ..Default::default() };
        let toy = make_toy(&cfg).unwrap();
        for (i, d) in toy.providers.iter().enumerate() {
            let means = cfg.means(i);
            for (r, y) in d.x.rows().zip(d.labels().unwrap()) {
                let k = means.iter().position(|m| m[0] == r[0] && m[1] == r[1]).expect("at a mean");
                assert_eq!(*y, k as f64, "inner mean is class 0, outer class 1");
            }
        }
    }

    #[test]
    fn default_providers_are_balanced() {
        let toy = make_toy(&ToyConfig::default()).unwrap();
        assert_eq!(toy.providers.len(), 3);
        for d in &toy.providers {
            assert_eq!(d.len(), 300);
            let ones = d.labels().unwrap().iter().filter(|v| **v == 1.0).count() as f64 / 300.0;
            assert!((0.3..=0.7).contains(&ones), "{ones}");
        }
    }

    #[test]
    fn deterministic() {
        let a = make_toy(&ToyConfig { seed: 5, ..Default::default() }).unwrap();
        let b = make_toy(&ToyConfig { seed: 5, ..Default::default() }).unwrap();
        assert_eq!(a.providers, b.providers);
        let c = make_toy(&ToyConfig { seed: 6, ..Default::default() }).unwrap();
        assert_ne!(a.providers, c.providers);
    }

    #[test]
    fn instance_counts_follow_weights() {
        let cfg = ToyConfig::default();
        let t = make_test(&cfg, &TestMode::InstanceRecurrent(vec![0.7, 0.3, 0.0]), 1000, 1).unwrap();
        let frac = |p: usize| t.provider.iter().filter(|&&q| q == p).count() as f64 / 1000.0;
        assert!((frac(0) - 0.7).abs() <= 0.05);
        assert!((frac(1) - 0.3).abs() <= 0.05);
        assert_eq!(frac(2), 0.0);
    }

    #[test]
    fn vertex_mixture_is_task_recurrent() {
        let cfg = ToyConfig::default();
        let t = make_test(&cfg, &TestMode::InstanceRecurrent(vec![0.0, 1.0, 0.0]), 200, 3).unwrap();
        assert!(t.provider.iter().all(|&p| p == 1));
        let mean = |d: &Dataset| {
            let n = d.len() as f64;
            [d.x.rows().map(|r| r[0]).sum::<f64>() / n, d.x.rows().map(|r| r[1]).sum::<f64>() / n]
        };
        let task = make_test(&cfg, &TestMode::TaskRecurrent(1), 200, 4).unwrap();
        let (a, b) = (mean(&t.data), mean(&task.data));
        assert!((a[0] - b[0]).abs() < 0.15 && (a[1] - b[1]).abs() < 0.15);
    }

    #[test]
    fn labels_depend_only_on_position() {
        let cfg = ToyConfig::default();
        let t = make_test(&cfg, &TestMode::InstanceRecurrent(vec![0.4, 0.3, 0.3]), 300, 2).unwrap();
        let rule = cfg.rule();
        for (r, y) in t.data.x.rows().zip(t.data.labels().unwrap()) {
            assert_eq!(rule.label(r), *y);
        }
    }

    #[test]
    fn invalid_modes() {
        let cfg = ToyConfig::default();
        assert!(make_test(&cfg, &TestMode::InstanceRecurrent(vec![0.5, 0.6, 0.0]), 10, 0).is_err());
        assert!(make_test(&cfg, &TestMode::InstanceRecurrent(vec![1.0, 0.0]), 10, 0).is_err());
        assert!(make_test(&cfg, &TestMode::InstanceRecurrent(vec![1.2, -0.2, 0.0]), 10, 0).is_err());
        assert!(make_test(&cfg, &TestMode::TaskRecurrent(3), 10, 0).is_err());
        assert!(make_toy(&ToyConfig { inner: 1.2, ..Default::default() }).is_err());
    }
}
