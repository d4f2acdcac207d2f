//! Invariants of the abnormality rules under random inputs.

use std::collections::BTreeSet;

use eegbg::abnormality::{alpha_amplitude_score, detect_gbs, electrode_ratios, focal_slow, Thresholds};
use eegbg::montage::{MontageMap, ANALYSIS_CHANNELS, MIRROR_PAIRS};
use eegbg::spectral::{lr_band_ratio, Band, LrBandRatio, PairRatio, PdrEstimate, PsdTable};
use ndarray::Array2;
use proptest::prelude::*;

fn pairs_from(values: &[f64]) -> Vec<PairRatio> {
    MIRROR_PAIRS
        .iter()
        .zip(values)
        .map(|(&(l, r), &v)| PairRatio { left: l.into(), right: r.into(), value: v, degenerate: false })
        .collect()
}

fn band(values: &[f64]) -> LrBandRatio {
    LrBandRatio { pairs: pairs_from(values), hemispheric: 0.0, hemispheric_degenerate: false }
}

fn mirror_set(set: &BTreeSet<String>, montage: &MontageMap) -> BTreeSet<String> {
    set.iter().map(|e| montage.mirror_of(e).map(str::to_string).unwrap_or_else(|| e.clone())).collect()
}

fn ratio_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, MIRROR_PAIRS.len())
}

fn artifact_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(ANALYSIS_CHANNELS.to_vec()), 0..4)
        .prop_map(|s| s.into_iter().map(String::from).collect())
}

fn psd_from(power: Vec<f64>) -> PsdTable {
    let freqs: Vec<f64> = (0..=120).map(|i| 1.0 + 0.25 * i as f64).collect();
    let nf = freqs.len();
    PsdTable {
        channels: ANALYSIS_CHANNELS.iter().map(|s| s.to_string()).collect(),
        freqs,
        power: Array2::from_shape_vec((ANALYSIS_CHANNELS.len(), nf), power).unwrap(),
        n_tapers: 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gbs_is_monotone(pl in 3.0f64..14.0, pr in 3.0f64..14.0, slow in 0.0f64..100.0,
                       dp in 0.0f64..3.0, ds in 0.0f64..50.0) {
        let th = Thresholds::default();
        let before = detect_gbs(Some(PdrEstimate { left: pl, right: pr }), slow, &th).unwrap();
        let slower = detect_gbs(Some(PdrEstimate { left: pl - dp, right: pr - dp }), slow + ds, &th).unwrap();
        prop_assert!(!before || slower, "slowing further cleared the finding");
    }

    #[test]
    fn alpha_score_mirror_symmetry(v in ratio_vec(), arts in artifact_set()) {
        let th = Thresholds::default();
        let montage = MontageMap::standard_10_20();
        let a = alpha_amplitude_score(&pairs_from(&v), &arts, &th);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let b = alpha_amplitude_score(&pairs_from(&neg), &mirror_set(&arts, &montage), &th);
        prop_assert_eq!(a.left, b.right);
        prop_assert_eq!(a.right, b.left);
        prop_assert_eq!(a.asymmetric, b.asymmetric);
        let mirrored: BTreeSet<String> = mirror_set(&a.lower_electrodes.iter().cloned().collect(), &montage);
        prop_assert_eq!(mirrored, b.lower_electrodes.iter().cloned().collect::<BTreeSet<_>>());
    }

    #[test]
    fn focal_score_mirror_symmetry(t in ratio_vec(), d in ratio_vec(), arts in artifact_set()) {
        let th = Thresholds::default();
        let montage = MontageMap::standard_10_20();
        let a = focal_slow(&electrode_ratios(&band(&t), &band(&d)), &arts, &montage, &th);
        let nt: Vec<f64> = t.iter().map(|x| -x).collect();
        let nd: Vec<f64> = d.iter().map(|x| -x).collect();
        let b = focal_slow(&electrode_ratios(&band(&nt), &band(&nd)), &mirror_set(&arts, &montage), &montage, &th);
        prop_assert_eq!(a.left, b.right);
        prop_assert_eq!(a.right, b.left);
        prop_assert_eq!(a.focal, b.focal);
    }

    #[test]
    fn adding_an_artifact_never_raises_a_score(t in ratio_vec(), d in ratio_vec(), arts in artifact_set(),
                                              extra in prop::sample::select(ANALYSIS_CHANNELS.to_vec())) {
        let th = Thresholds::default();
        let montage = MontageMap::standard_10_20();
        let mut more = arts.clone();
        more.insert(extra.to_string());
        let a0 = alpha_amplitude_score(&pairs_from(&t), &arts, &th);
        let a1 = alpha_amplitude_score(&pairs_from(&t), &more, &th);
        prop_assert!(a1.left <= a0.left && a1.right <= a0.right);
        let ratios = electrode_ratios(&band(&t), &band(&d));
        let f0 = focal_slow(&ratios, &arts, &montage, &th);
        let f1 = focal_slow(&ratios, &more, &montage, &th);
        prop_assert!(f1.left <= f0.left && f1.right <= f0.right);
    }

    #[test]
    fn scores_are_invariant_to_power_scaling(
        power in prop::collection::vec(0.01f64..100.0, ANALYSIS_CHANNELS.len() * 121),
        k in -20i32..20,
        c in 0.001f64..1000.0,
    ) {
        let th = Thresholds::default();
        let montage = MontageMap::standard_10_20();
        let psd = psd_from(power);
        let score = |p: &PsdTable| {
            let alpha = lr_band_ratio(p, Band::Alpha).unwrap();
            let ratios = electrode_ratios(&lr_band_ratio(p, Band::Theta).unwrap(), &lr_band_ratio(p, Band::Delta).unwrap());
            let a = alpha_amplitude_score(&alpha.pairs, &BTreeSet::new(), &th);
            let f = focal_slow(&ratios, &BTreeSet::new(), &montage, &th);
            (alpha, a, f)
        };
        let base = score(&psd);
        // powers of two scale exactly, so everything matches bit for bit
        prop_assert_eq!(&score(&psd.scaled(2f64.powi(k))), &base);
        // any other factor preserves the ratios to rounding
        let (alpha, _, _) = score(&psd.scaled(c));
        for (x, y) in alpha.pairs.iter().zip(&base.0.pairs) {
            prop_assert!((x.value - y.value).abs() < 1e-12);
        }
    }
}
