//! Evaluation statistics: confusion-matrix metrics, McNemar's test, the
//! pooled two-proportion z-test and Gwet's AC1 agreement coefficient.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    /// From a 2×2 table with actual classes as rows and predicted classes as
    /// columns, negative first: `[[tn, fp], [fn, tp]]`.
    pub fn from_table(t: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { tn: t[0][0], fp: t[0][1], fn_: t[1][0], tp: t[1][1] }
    }

    pub fn to_table(&self) -> [[u64; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }

    pub fn from_pairs(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    /// Set when a metric's denominator was zero and the metric was reported as 0.
    pub degenerate_precision: bool,
    pub degenerate_recall: bool,
    pub degenerate_f1: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    if cm.total() == 0 {
        return Err(Error::InvalidParameter("empty confusion matrix".into()));
    }
    let (precision, dp) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, dr) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, df) = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_);
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    Ok(ClassificationMetrics {
        f1,
        precision,
        recall,
        accuracy,
        degenerate_precision: dp,
        degenerate_recall: dr,
        degenerate_f1: df,
    })
}

impl ClassificationMetrics {
    /// Aligned two-column text table.
    pub fn to_table(&self, cm: &ConfusionMatrix) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("F1", self.f1),
            ("precision", self.precision),
            ("recall", self.recall),
            ("accuracy", self.accuracy),
        ] {
            s.push_str(&format!("{k:<12}{v:>8.3}\n"));
        }
        s.push_str(&format!(
            "{:<12}{:>8}\n{:<12}{:>8}\n{:<12}{:>8}\n{:<12}{:>8}\n",
            "TP", cm.tp, "FP", cm.fp, "FN", cm.fn_, "TN", cm.tn
        ));
        s
    }
}

/// Below this many discordant pairs McNemar uses the exact binomial test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub p_value: f64,
    /// Chi-square statistic; `None` for the exact branch.
    pub statistic: Option<f64>,
    pub exact: bool,
}

/// Two-sided McNemar test on discordant counts `b` and `c`.
pub fn mcnemar(b: u64, c: u64) -> McNemar {
    let n = b + c;
    if n == 0 {
        return McNemar { p_value: 1.0, statistic: None, exact: true };
    }
    if n < MCNEMAR_EXACT_BELOW {
        let binom = Binomial::new(0.5, n).expect("valid binomial");
        let p = (2.0 * binom.cdf(b.min(c))).min(1.0);
        McNemar { p_value: p, statistic: None, exact: true }
    } else {
        let d = (b as f64 - c as f64).abs() - 1.0;
        let stat = d.max(0.0).powi(2) / n as f64;
        let chi = ChiSquared::new(1.0).expect("valid dof");
        McNemar { p_value: chi.sf(stat), statistic: Some(stat), exact: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled-variance two-sided test of `k1/n1` against `k2/n2`.
pub fn two_proportion_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InvalidParameter(format!("invalid proportions {k1}/{n1}, {k2}/{n2}")));
    }
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pool = (k1 + k2) as f64 / (n1 + n2) as f64;
    let se = (pool * (1.0 - pool) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return Ok(ZTest { z: 0.0, p_value: 1.0 });
    }
    let z = (p1 - p2) / se;
    let norm = Normal::standard();
    Ok(ZTest { z, p_value: (2.0 * norm.sf(z.abs())).min(1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ac1 {
    pub ac1: f64,
    pub pa: f64,
    pub pe: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
}

/// Gwet's AC1 for binary ratings, `ratings[item][rater]`. The standard error
/// is Gwet's item-level estimator; the interval is a normal approximation.
pub fn gwet_ac1(ratings: &[Vec<bool>]) -> Result<Ac1> {
    if ratings.is_empty() {
        return Err(Error::InvalidParameter("no items to rate".into()));
    }
    if let Some(i) = ratings.iter().position(|r| r.len() < 2) {
        return Err(Error::InvalidParameter(format!("item {i} has fewer than two ratings")));
    }
    let n = ratings.len() as f64;
    // (share of 1-ratings, per-item pairwise agreement)
    let items: Vec<(f64, f64)> = ratings
        .iter()
        .map(|r| {
            let m = r.len() as f64;
            let ones = r.iter().filter(|&&v| v).count() as f64;
            let zeros = m - ones;
            let agree = (ones * (ones - 1.0) + zeros * (zeros - 1.0)) / (m * (m - 1.0));
            (ones / m, agree)
        })
        .collect();
    let pa = items.iter().map(|i| i.1).sum::<f64>() / n;
    let pi = items.iter().map(|i| i.0).sum::<f64>() / n;
    let pe = 2.0 * pi * (1.0 - pi);
    if pe >= 1.0 {
        return Err(Error::InvalidParameter("chance agreement is 1; AC1 undefined".into()));
    }
    let ac1 = (pa - pe) / (1.0 - pe);
    let var = if ratings.len() > 1 {
        items
            .iter()
            .map(|&(share, agree)| {
                let pe_i = share * (1.0 - pi) + (1.0 - share) * pi;
                let ac1_i = (agree - pe) / (1.0 - pe);
                let x = ac1_i - 2.0 * (1.0 - ac1) * (pe_i - pe) / (1.0 - pe);
                (x - ac1).powi(2)
            })
            .sum::<f64>()
            / (n * (n - 1.0))
    } else {
        0.0
    };
    let se = var.sqrt();
    let zq = Normal::standard().inverse_cdf(0.975);
    Ok(Ac1 { ac1, pa, pe, std_err: se, ci95: (ac1 - zq * se, ac1 + zq * se) })
}
