//! Histogram-based outlier score.

/// Static-width histogram HBOS with `⌈√n⌉` bins per dimension. Bin heights
/// are normalized so the tallest bin is 1 and each item scores
/// `Σ_d −ln(max(height, floor))`. Constant dimensions contribute nothing.
pub fn hbos_score(items: &[&[f64]], floor: f64) -> Vec<f64> {
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let dims = items[0].len();
    let bins = (n as f64).sqrt().ceil() as usize;
    let mut scores = vec![0.0; n];
    let mut counts = vec![0usize; bins];
    let mut slot = vec![0usize; n];
    for d in 0..dims {
        let (lo, hi) = items.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), it| {
            (lo.min(it[d]), hi.max(it[d]))
        });
        let span = hi - lo;
        if !(span > 1e-12 * lo.abs().max(hi.abs()).max(1e-300)) {
            continue;
        }
        let width = span / bins as f64;
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, it) in items.iter().enumerate() {
            let b = (((it[d] - lo) / width) as usize).min(bins - 1);
            slot[i] = b;
            counts[b] += 1;
        }
        let tallest = *counts.iter().max().unwrap() as f64;
        for i in 0..n {
            let h = counts[slot[i]] as f64 / tallest;
            scores[i] -= h.max(floor).ln();
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_items_score_equal() {
        let v = vec![vec![1.0, 2.0, 3.0]; 12];
        let refs: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let s = hbos_score(&refs, 1e-12);
        assert!(s.iter().all(|&x| x == s[0]));
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn permutation_permutes_scores() {
        let v: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64 * 0.5])
            .collect();
        let refs: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let s = hbos_score(&refs, 1e-12);
        let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
        let pv: Vec<&[f64]> = perm.iter().map(|&i| refs[i]).collect();
        let ps = hbos_score(&pv, 1e-12);
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(ps[k], s[i]);
        }
    }
}
