//! Lloyd's k-means with k-means++ seeding; used to initialise reduced sets
//! and the centers of compact kernel models.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Points;
use crate::error::{Error, Result};
use crate::kernel::sq_dist;

pub const DEFAULT_MAX_ITER: usize = 100;

pub fn kmeans(x: &Points, k: usize, max_iter: usize, seed: u64) -> Result<Points> {
    if k == 0 || k > x.len() {
        return Err(Error::input(format!("k-means needs 1 <= k <= n, got k={k}, n={}", x.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(x, k, &mut rng);
    let d = x.dim();
    let mut assign = vec![usize::MAX; x.len()];

    for _ in 0..max_iter {
        let mut changed = false;
        for (i, row) in x.rows().enumerate() {
            let c = nearest(&centers, row).0;
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, row) in x.rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * d..].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / n;
                }
            }
        }
    }
    Ok(centers)
}

fn nearest(centers: &Points, row: &[f64]) -> (usize, f64) {
    centers
        .rows()
        .map(|c| sq_dist(c, row))
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
}

fn plus_plus(x: &Points, k: usize, rng: &mut impl Rng) -> Points {
    let mut centers = Points::empty(x.dim());
    centers.push(x.row(rng.random_range(0..x.len()))).expect("same dim");
    let mut dist: Vec<f64> = x.rows().map(|r| sq_dist(r, centers.row(0))).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // every point coincides with a center already
            Err(_) => rng.random_range(0..x.len()),
        };
        centers.push(x.row(next)).expect("same dim");
        let c = centers.row(centers.len() - 1).to_vec();
        for (d, r) in dist.iter_mut().zip(x.rows()) {
            *d = d.min(sq_dist(r, &c));
        }
    }
    centers
}
