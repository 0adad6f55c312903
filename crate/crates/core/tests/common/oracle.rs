//! Reference implementations written without reference to the library code.

use std::collections::BTreeMap;

/// Cohen's kappa for two raters from a full confusion matrix in floating
/// point. Categories are arbitrary comparable keys.
pub fn cohen_kappa<K: Ord + Clone>(a: &[K], b: &[K]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut cats: Vec<K> = a.iter().chain(b).cloned().collect();
    cats.sort();
    cats.dedup();
    let idx = |k: &K| cats.binary_search(k).unwrap();
    let m = cats.len();
    let mut matrix = vec![vec![0.0f64; m]; m];
    for (x, y) in a.iter().zip(b) {
        matrix[idx(x)][idx(y)] += 1.0;
    }
    let p_o: f64 = (0..m).map(|i| matrix[i][i]).sum::<f64>() / n;
    let p_e: f64 = (0..m)
        .map(|k| {
            let row: f64 = matrix[k].iter().sum();
            let col: f64 = matrix.iter().map(|r| r[k]).sum();
            (row / n) * (col / n)
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    }
}

/// Mean pairwise kappa. `votes[label][annotator][turn]`.
pub fn mean_pairwise_kappa<K: Ord + Clone>(votes: &[Vec<Vec<K>>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for label in votes {
        for i in 0..label.len() {
            for j in i + 1..label.len() {
                total += cohen_kappa(&label[i], &label[j]);
                count += 1;
            }
        }
    }
    if count == 0 {
        1.0
    } else {
        total / count as f64
    }
}

/// Majority over whole values: the most frequent value and whether the top
/// count is shared.
pub fn mode<K: Ord + Clone>(votes: &[K]) -> (K, bool) {
    let mut counts: BTreeMap<&K, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let best = *counts.values().max().unwrap();
    let winners: Vec<&&K> = counts
        .iter()
        .filter(|(_, c)| **c == best)
        .map(|(k, _)| k)
        .collect();
    ((*winners[0]).clone(), winners.len() > 1)
}
