//! Group-aware, label-stratified partitioning. All examples sharing a group
//! key (the source file) always land in the same partition.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledExample;
use crate::{Error, Result};

/// Groups as `(mean label, example indices)`, ordered by label with a seeded
/// random tie-break.
fn ordered_groups(data: &[LabeledExample], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in data.iter().enumerate() {
        by_key.entry(e.group_key.as_str()).or_default().push(i);
    }
    let mut groups: Vec<(f64, u64, Vec<usize>)> = by_key
        .into_values()
        .map(|idx| {
            let mean = idx.iter().map(|&i| data[i].label_hz).sum::<f64>() / idx.len() as f64;
            (mean, rng.random::<u64>(), idx)
        })
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    groups.into_iter().map(|g| g.2).collect()
}

/// Returns `(train, test)` example indices. Groups are walked in label order
/// and every `1 / (1 - train_frac)`-th one goes to the test side.
pub fn split_grouped(data: &[LabeledExample], train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&train_frac) || train_frac == 0.0 {
        return Err(Error::InvalidParameter(format!("train fraction {train_frac} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = ordered_groups(data, &mut rng);
    if groups.len() < 2 {
        return Err(Error::InvalidParameter("need at least two groups to split".into()));
    }
    let test_frac = 1.0 - train_frac;
    let offset: f64 = rng.random();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, g) in groups.iter().enumerate() {
        let a = (i as f64 * test_frac + offset).floor();
        let b = ((i + 1) as f64 * test_frac + offset).floor();
        if b > a {
            test.extend(g);
        } else {
            train.extend(g);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidParameter("split left one partition empty".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Assigns groups to `k` folds: label-ordered groups are dealt out in blocks
/// of `k`, shuffled within each block. Returns example indices per fold.
pub fn kfold_grouped(data: &[LabeledExample], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k}, need at least 2 folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = ordered_groups(data, &mut rng);
    if k > groups.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the number of groups ({})",
            groups.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut slots: Vec<usize> = (0..k).collect();
    let mut fill = 0;
    for block in groups.chunks(k) {
        // rotate the starting fold so short tail blocks do not always land in fold 0
        slots.shuffle(&mut rng);
        for (g, &f) in block.iter().zip(slots.iter().cycle().skip(fill)) {
            folds[f].extend(g);
        }
        fill = (fill + block.len()) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdr::{PdrFeatureMap, Side};
    use ndarray::Array2;
    use std::collections::BTreeSet;

    fn data(n_groups: usize) -> Vec<LabeledExample> {
        let map = PdrFeatureMap::from_values(Array2::zeros((6, 48)), Side::Left).unwrap();
        (0..n_groups)
            .flat_map(|g| {
                let label = 4.0 + 0.5 * (g % 17) as f64;
                [Side::Left, Side::Right].map(|s| {
                    let mut m = map.clone();
                    m.side = s;
                    LabeledExample::new(m, label, format!("file{g}")).unwrap()
                })
            })
            .collect()
    }

    fn keys(d: &[LabeledExample], idx: &[usize]) -> BTreeSet<String> {
        idx.iter().map(|&i| d[i].group_key.clone()).collect()
    }

    #[test]
    fn split_never_leaks_groups() {
        let d = data(40);
        for seed in 0..20 {
            let (tr, te) = split_grouped(&d, 0.7, seed).unwrap();
            assert!(keys(&d, &tr).is_disjoint(&keys(&d, &te)));
            assert_eq!(tr.len() + te.len(), d.len());
            assert_eq!(te.len(), 24, "12 of 40 groups expected in the test side");
        }
    }

    #[test]
    fn kfold_partitions_groups_evenly() {
        let d = data(8);
        let folds = kfold_grouped(&d, 4, 1).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(keys(&d, f).len(), 2);
        }
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(keys(&d, &folds[i]).is_disjoint(&keys(&d, &folds[j])));
            }
        }
    }

    #[test]
    fn kfold_balances_uneven_counts() {
        let d = data(10);
        let sizes: Vec<usize> = kfold_grouped(&d, 4, 2).unwrap().iter().map(|f| keys(&d, f).len()).collect();
        assert!(sizes.iter().all(|&s| s == 2 || s == 3), "{sizes:?}");
    }

    #[test]
    fn too_many_folds_is_an_error() {
        assert!(kfold_grouped(&data(3), 4, 0).is_err());
    }
}
