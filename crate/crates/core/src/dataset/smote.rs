use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

pub const DEFAULT_K: usize = 5;

/// One synthetic draw: `parent + lambda * (neighbor - parent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteDraw {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points of `i` (Euclidean, ties by index).
pub fn nearest_neighbors(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| (sq_dist(&points[i], p), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Chooses parents, neighbors and interpolation weights.
pub fn smote_plan(minority: &[Vec<f64>], k: usize, target_count: usize, seed: u64) -> Result<Vec<SmoteDraw>> {
    if k == 0 {
        return invalid("SMOTE needs k >= 1");
    }
    if minority.len() <= k {
        return invalid(format!("SMOTE needs more than k={k} minority samples, got {}", minority.len()));
    }
    let dim = minority[0].len();
    if minority.iter().any(|m| m.len() != dim) {
        return invalid("minority vectors differ in length");
    }
    let mut knn: Vec<Option<Vec<usize>>> = vec![None; minority.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target_count);
    for _ in 0..target_count {
        let parent = rng.gen_range(0..minority.len());
        let nn = knn[parent].get_or_insert_with(|| nearest_neighbors(minority, parent, k));
        let neighbor = nn[rng.gen_range(0..nn.len())];
        let lambda: f64 = rng.gen();
        out.push(SmoteDraw { parent, neighbor, lambda });
    }
    Ok(out)
}

pub fn interpolate(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect()
}

/// `target_count` synthetic minority vectors, deterministic under `seed`.
pub fn smote_oversample(minority: &[Vec<f64>], k: usize, target_count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(smote_plan(minority, k, target_count, seed)?
        .into_iter()
        .map(|d| interpolate(&minority[d.parent], &minority[d.neighbor], d.lambda))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint() {
        assert_eq!(interpolate(&[0.0, 0.0], &[1.0, 1.0], 0.5), vec![0.5, 0.5]);
    }

    #[test]
    fn identical_minority_gives_copies() {
        let m = vec![vec![0.3, 0.7]; 2];
        for s in smote_oversample(&m, 1, 10, 4).unwrap() {
            assert_eq!(s, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn too_few_samples() {
        let m = vec![vec![0.0]; 5];
        assert!(smote_oversample(&m, 5, 3, 0).is_err());
        assert!(smote_oversample(&m, 0, 3, 0).is_err());
    }

    #[test]
    fn neighbors_ordered_by_distance() {
        let p = vec![vec![0.0], vec![5.0], vec![1.0], vec![2.0]];
        assert_eq!(nearest_neighbors(&p, 0, 2), vec![2, 3]);
    }

    #[test]
    fn deterministic() {
        let m: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert_eq!(smote_oversample(&m, 3, 20, 9).unwrap(), smote_oversample(&m, 3, 20, 9).unwrap());
        assert_eq!(smote_oversample(&m, 3, 20, 9).unwrap().len(), 20);
    }
}
