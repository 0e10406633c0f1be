//! Translation-invariant kernels, Gram matrices and kernel gradients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-gamma * |x - x'|^2)`
    #[default]
    Gaussian,
    /// `exp(-gamma * |x - x'|)`
    Laplacian,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel family plus bandwidth. Shared by every embedding in a pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub gamma: f64,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, gamma: f64) -> Result<Self> {
        let cfg = KernelConfig { family, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, gamma)
    }

    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Characteristic length of one kernel bump.
    pub fn length_scale(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (2.0 * self.gamma).sqrt().recip(),
            KernelFamily::Laplacian => self.gamma.recip(),
        }
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-self.gamma * d2).exp(),
            KernelFamily::Laplacian => (-self.gamma * d2.sqrt()).exp(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), got: y.len() });
        }
        if x.is_empty() {
            return Err(Error::input("kernel arguments must have dimension >= 1"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(x, y))
    }

    /// Gradient of `k(z, x)` with respect to `z`.
    ///
    /// The Laplacian kernel has a kink at `z == x`; that case returns
    /// [`Error::Singularity`] and callers are expected to drop the term.
    pub fn grad_z(&self, z: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if z.len() != x.len() {
            return Err(Error::Dimension { expected: z.len(), got: x.len() });
        }
        let mut out = vec![0.0; z.len()];
        if self.accumulate_grad(z, x, 1.0, &mut out) {
            Ok(out)
        } else {
            Err(Error::Singularity)
        }
    }

    /// Adds `scale * dk(z, x)/dz` into `out`. Returns `false` (and adds
    /// nothing) when the gradient is undefined.
    #[inline]
    pub(crate) fn accumulate_grad(&self, z: &[f64], x: &[f64], scale: f64, out: &mut [f64]) -> bool {
        let d2 = sq_dist(z, x);
        let coef = match self.family {
            KernelFamily::Gaussian => -2.0 * self.gamma * (-self.gamma * d2).exp(),
            KernelFamily::Laplacian => {
                if d2 == 0.0 {
                    return false;
                }
                let d = d2.sqrt();
                -self.gamma * (-self.gamma * d).exp() / d
            }
        };
        let c = scale * coef;
        for ((o, zi), xi) in out.iter_mut().zip(z).zip(x) {
            *o += c * (zi - xi);
        }
        true
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn sq_norms(p: &Points) -> Vec<f64> {
    p.rows().map(|r| dot(r, r)).collect()
}

/// Gram matrix `G[i][j] = k(a_i, b_j)`.
pub fn gram(cfg: &KernelConfig, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
    gram_with(cfg, a, b, Execution::default())
}

/// Gram matrix with an explicit execution mode. Squared distances use the
/// expansion `|a|^2 + |b|^2 - 2 a.b`, clamped at zero.
pub fn gram_with(
    cfg: &KernelConfig,
    a: &Points,
    b: &Points,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    b.check_dim(a.dim())?;
    let (na, nb) = (sq_norms(a), sq_norms(b));
    let rows = exec.map(a.len(), |i| {
        let ai = a.row(i);
        (0..b.len())
            .map(|j| {
                let d2 = na[i] + nb[j] - 2.0 * dot(ai, b.row(j));
                // roundoff clamp; NaN from overflow must propagate
                cfg.from_sq_dist(if d2 < 0.0 { 0.0 } else { d2 })
            })
            .collect::<Vec<f64>>()
    });
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j]))
}
