use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use eegbg::report::verify::{batch_agreement, Agreement, VerificationResult};
use eegbg::stats::{classification_metrics, mcnemar, ClassificationMetrics, ConfusionMatrix, McNemar};
use serde::Serialize;

use crate::InputError;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// CSV `id,value` of binary predictions (0/1).
    #[arg(long, requires = "labels")]
    pub predictions: Option<PathBuf>,
    /// CSV `id,value` of reference labels (0/1).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Second prediction CSV compared against `--predictions` with McNemar's test.
    #[arg(long, requires = "predictions")]
    pub compare: Option<PathBuf>,
    /// Confusion matrix given directly as `tn,fp,fn,tp`.
    #[arg(long, value_delimiter = ',', conflicts_with = "predictions")]
    pub confusion: Option<Vec<u64>>,
    /// `.verify.json` files; reports AC1 agreement between verifiers.
    #[arg(long, num_args = 1..)]
    pub verifications: Vec<PathBuf>,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compare_metrics: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mcnemar: Option<McNemarOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<Agreement>,
}

#[derive(Serialize)]
struct McNemarOut {
    /// Items only the primary predictions got right.
    b: u64,
    /// Items only the comparison predictions got right.
    c: u64,
    #[serde(flatten)]
    test: McNemar,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "abnormal" => Some(true),
        "0" | "false" | "no" | "normal" => Some(false),
        _ => None,
    }
}

fn read_binary(path: &Path) -> Result<BTreeMap<String, bool>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        let (id, v) = match (rec.get(0), rec.get(1)) {
            (Some(id), Some(v)) => (id, v),
            _ => return Err(InputError(format!("{} row {}: expected `id,value`", path.display(), i + 2)).into()),
        };
        let b = parse_bool(v)
            .ok_or_else(|| InputError(format!("{} row {}: `{v}` is not 0/1", path.display(), i + 2)))?;
        if out.insert(id.to_string(), b).is_some() {
            return Err(InputError(format!("{}: duplicate id `{id}`", path.display())).into());
        }
    }
    Ok(out)
}

/// Aligns two id-keyed tables; both must cover exactly the same ids.
fn aligned(a: &BTreeMap<String, bool>, b: &BTreeMap<String, bool>, what: &str) -> Result<(Vec<bool>, Vec<bool>)> {
    if a.len() != b.len() || a.keys().ne(b.keys()) {
        return Err(InputError(format!(
            "{what}: id sets differ ({} vs {} rows)",
            a.len(),
            b.len()
        ))
        .into());
    }
    Ok((a.values().copied().collect(), b.values().copied().collect()))
}

fn text_table(out: &EvalOutput) -> String {
    let mut s = String::new();
    if let (Some(cm), Some(m)) = (&out.confusion, &out.metrics) {
        s.push_str(&m.to_table(cm));
    }
    if let Some(m) = &out.compare_metrics {
        s.push_str(&format!("{:<12}{:>8.3}\n{:<12}{:>8.3}\n", "cmp F1", m.f1, "cmp acc", m.accuracy));
    }
    if let Some(mc) = &out.mcnemar {
        s.push_str(&format!(
            "{:<12}{:>8}\n{:<12}{:>8}\n{:<12}{:>8.5}\n",
            "McNemar b", mc.b, "McNemar c", mc.c, "p-value", mc.test.p_value
        ));
    }
    if let Some(a) = &out.agreement {
        s.push_str(&format!("{:<12}{:>8}\n", "reports", a.items));
        for (k, v) in [("AC1 GBS", &a.gbs), ("AC1 focal", &a.focal)] {
            match v {
                Some(ac) => s.push_str(&format!("{k:<12}{:>8.3}\n", ac.ac1)),
                None => s.push_str(&format!("{k:<12}{:>8}\n", "n/a")),
            }
        }
    }
    s
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut out =
        EvalOutput { confusion: None, metrics: None, compare_metrics: None, mcnemar: None, agreement: None };
    if let Some(t) = &args.confusion {
        if t.len() != 4 {
            return Err(InputError(format!("--confusion needs tn,fp,fn,tp (got {} values)", t.len())).into());
        }
        let cm = ConfusionMatrix::from_table([[t[0], t[1]], [t[2], t[3]]]);
        out.metrics = Some(classification_metrics(&cm)?);
        out.confusion = Some(cm);
    }
    if let (Some(p), Some(l)) = (&args.predictions, &args.labels) {
        let labels = read_binary(l)?;
        let (pred, truth) = aligned(&read_binary(p)?, &labels, "predictions vs labels")?;
        let cm = ConfusionMatrix::from_pairs(&pred, &truth)?;
        out.metrics = Some(classification_metrics(&cm)?);
        out.confusion = Some(cm);
        if let Some(c) = &args.compare {
            let (other, _) = aligned(&read_binary(c)?, &labels, "comparison vs labels")?;
            out.compare_metrics = Some(classification_metrics(&ConfusionMatrix::from_pairs(&other, &truth)?)?);
            let (mut b, mut cc) = (0, 0);
            for ((p, o), t) in pred.iter().zip(&other).zip(&truth) {
                match (p == t, o == t) {
                    (true, false) => b += 1,
                    (false, true) => cc += 1,
                    _ => {}
                }
            }
            out.mcnemar = Some(McNemarOut { b, c: cc, test: mcnemar(b, cc) });
        }
    }
    if !args.verifications.is_empty() {
        let results = args
            .verifications
            .iter()
            .map(|p| -> Result<VerificationResult> {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.agreement = Some(batch_agreement(&results));
    }
    if out.metrics.is_none() && out.agreement.is_none() {
        return Err(InputError("nothing to evaluate: pass --predictions/--labels, --confusion or --verifications".into()).into());
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", text_table(&out));
    }
    Ok(())
}
