//! Kernel herding from a reduced embedding.
//!
//! Each draw greedily maximises `Phi(x) - 1/(T+1) sum_t k(x_t, x)` so the
//! running average of drawn feature maps tracks `Phi`. The continuous argmax
//! is approximated by multi-start gradient ascent seeded at the reduced-set
//! atoms and at Gaussian perturbations of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Points;
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::par;
use crate::rkme::Rkme;

const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerdOptions {
    /// Random restarts added to the `M` atom starts.
    pub restarts: usize,
    /// Ascent iterations per start.
    pub steps: usize,
    pub seed: u64,
}

impl Default for HerdOptions {
    fn default() -> Self {
        HerdOptions { restarts: 10, steps: 50, seed: 0 }
    }
}

/// Points drawn so far from one specification. Append-only.
#[derive(Debug, Clone)]
pub struct HerdState<'a> {
    spec: &'a Rkme,
    drawn: Points,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> HerdState<'a> {
    pub fn new(spec: &'a Rkme) -> Self {
        let d = spec.dim();
        let pad = 5.0 / spec.kernel.gamma.sqrt();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for z in spec.z.rows() {
            for j in 0..d {
                lower[j] = lower[j].min(z[j]);
                upper[j] = upper[j].max(z[j]);
            }
        }
        lower.iter_mut().for_each(|v| *v -= pad);
        upper.iter_mut().for_each(|v| *v += pad);
        HerdState { spec, drawn: Points::empty(d), lower, upper }
    }

    pub fn spec(&self) -> &Rkme {
        self.spec
    }

    pub fn drawn(&self) -> &Points {
        &self.drawn
    }

    pub fn into_drawn(self) -> Points {
        self.drawn
    }

    pub fn len(&self) -> usize {
        self.drawn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drawn.is_empty()
    }

    /// Lower and upper corners of the box every draw stays inside.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Herding objective for the next draw at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let cfg = &self.spec.kernel;
        let phi = self.spec.embedding().eval(cfg, x);
        if self.drawn.is_empty() {
            return phi;
        }
        let past: f64 = self.drawn.rows().map(|p| cfg.eval_unchecked(p, x)).sum();
        phi - past / (self.drawn.len() + 1) as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let cfg: &KernelConfig = &self.spec.kernel;
        let mut g = vec![0.0; x.len()];
        for (b, z) in self.spec.beta.iter().zip(self.spec.z.rows()) {
            cfg.accumulate_grad(x, z, *b, &mut g);
        }
        let scale = -1.0 / (self.drawn.len() + 1) as f64;
        for p in self.drawn.rows() {
            cfg.accumulate_grad(x, p, scale, &mut g);
        }
        g
    }

    fn clip(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn ascend(&self, mut x: Vec<f64>, steps: usize) -> (Vec<f64>, f64) {
        let mut fx = self.objective(&x);
        let mut step = 0.5 / self.spec.kernel.gamma;
        'outer: for _ in 0..steps {
            let g = self.gradient(&x);
            if g.iter().all(|v| *v == 0.0) {
                break;
            }
            for _ in 0..=MAX_HALVINGS {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                self.clip(&mut trial);
                let ft = self.objective(&trial);
                if ft > fx {
                    x = trial;
                    fx = ft;
                    continue 'outer;
                }
                step *= 0.5;
            }
            break;
        }
        (x, fx)
    }

    /// Draws the next herded point and appends it to the state.
    pub fn next(&mut self, opts: &HerdOptions) -> Result<Vec<f64>> {
        let spec = self.spec;
        let d = spec.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(self.drawn.len() as u64);
        let sigma = spec.kernel.length_scale();

        let mut starts: Vec<Vec<f64>> = spec.z.rows().map(<[f64]>::to_vec).collect();
        for _ in 0..opts.restarts {
            let atom = rng.random_range(0..spec.len());
            let mut p: Vec<f64> = spec
                .z
                .row(atom)
                .iter()
                .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            self.clip(&mut p);
            starts.push(p);
        }

        let results = par::map(starts.len(), |i| self.ascend(starts[i].clone(), opts.steps));
        // best-of with ties to the lowest start index
        let (best, _) = results
            .into_iter()
            .fold((None::<Vec<f64>>, f64::NEG_INFINITY), |(bx, bf), (x, f)| {
                if f > bf || bx.is_none() {
                    (Some(x), f)
                } else {
                    (bx, bf)
                }
            });
        let best = best.ok_or_else(|| Error::input("specification has no atoms"))?;
        debug_assert_eq!(best.len(), d);
        self.drawn.push(&best)?;
        Ok(best)
    }
}

pub fn herd_next(state: &mut HerdState<'_>, opts: &HerdOptions) -> Result<Vec<f64>> {
    state.next(opts)
}

/// Draws `n` herded points from `spec`.
pub fn herd_sample(spec: &Rkme, n: usize, opts: &HerdOptions) -> Result<Points> {
    if n == 0 {
        return Err(Error::input("herd_sample needs n >= 1"));
    }
    let mut state = HerdState::new(spec);
    for _ in 0..n {
        state.next(opts)?;
    }
    Ok(state.into_drawn())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rkme::{mmd_sq, RkmeMeta};

    fn spec(gamma: f64, beta: Vec<f64>, rows: &[[f64; 2]]) -> Rkme {
        Rkme::new(
            KernelConfig::gaussian(gamma).unwrap(),
            beta,
            Points::from_rows(rows).unwrap(),
            RkmeMeta { source_size: 10, objective: 0.0, created: None },
        )
        .unwrap()
    }

    /// Maximiser of the next-draw objective over a regular grid.
    fn grid_argmax(state: &HerdState<'_>, lo: f64, hi: f64, n: usize) -> [f64; 2] {
        let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
        for i in 0..=n {
            for j in 0..=n {
                let p = [
                    lo + (hi - lo) * i as f64 / n as f64,
                    lo + (hi - lo) * j as f64 / n as f64,
                ];
                let f = state.objective(&p);
                if f > best.1 {
                    best = (p, f);
                }
            }
        }
        best.0
    }

    #[test]
    fn single_atom_first_draw_is_the_atom() {
        let s = spec(1.0, vec![1.0], &[[0.3, -1.2]]);
        let x = herd_sample(&s, 1, &HerdOptions::default()).unwrap();
        assert!((x.row(0)[0] - 0.3).abs() < 1e-12 && (x.row(0)[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn two_atoms_match_grid_oracle() {
        let s = spec(20.0, vec![0.5, 0.5], &[[-2.0, 0.0], [2.0, 1.0]]);
        let mut state = HerdState::new(&s);
        let oracle1 = grid_argmax(&state, -3.0, 3.0, 600);
        let first = state.next(&HerdOptions::default()).unwrap();
        let near = |p: &[f64], q: &[f64; 2], tol: f64| (p[0] - q[0]).hypot(p[1] - q[1]) < tol;
        assert!(near(&first, &[-2.0, 0.0], 1e-3) || near(&first, &[2.0, 1.0], 1e-3));
        assert!(near(&first, &oracle1, 0.02));

        let oracle2 = grid_argmax(&state, -3.0, 3.0, 600);
        let second = state.next(&HerdOptions::default()).unwrap();
        assert!(near(&second, &oracle2, 0.02));
        assert!((first[0] - second[0]).abs() > 3.0, "second draw must go to the other atom");
    }

    #[test]
    fn deterministic_and_bounded() {
        let s = spec(2.0, vec![0.6, 0.3, 0.1], &[[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0]]);
        let opts = HerdOptions { seed: 42, ..Default::default() };
        let a = herd_sample(&s, 40, &opts).unwrap();
        let b = herd_sample(&s, 40, &opts).unwrap();
        assert_eq!(a, b);
        let state = HerdState::new(&s);
        let (lo, hi) = state.bounds();
        for r in a.rows() {
            for j in 0..2 {
                assert!(r[j].is_finite() && r[j] >= lo[j] && r[j] <= hi[j]);
            }
        }
        assert!(herd_sample(&s, 0, &opts).is_err());
    }

    #[test]
    fn draw_is_at_least_as_good_as_every_start() {
        let s = spec(3.0, vec![0.5, 0.5], &[[0.0, 0.0], [0.4, 0.0]]);
        let mut state = HerdState::new(&s);
        for _ in 0..5 {
            let before: Vec<f64> = s.z.rows().map(|z| state.objective(z)).collect();
            let snapshot = state.clone();
            let x = state.next(&HerdOptions::default()).unwrap();
            let fx = snapshot.objective(&x);
            assert!(before.iter().all(|f| fx >= *f));
        }
    }

    #[test]
    fn herding_error_shrinks() {
        let s = spec(1.0, vec![0.5, 0.3, 0.2], &[[0.0, 0.0], [1.5, 0.0], [0.0, 1.5]]);
        let x = herd_sample(&s, 60, &HerdOptions::default()).unwrap();
        let err = |t: usize| {
            let idx: Vec<usize> = (0..t).collect();
            mmd_sq((&x.select(&idx)).into(), (&s).into()).unwrap()
        };
        assert!(err(60) < err(10) && err(10) < err(2));
    }
}
