//! Confusion-matrix metrics, the baseline comparison table and the
//! contribution bar chart.
//!
//! Malicious (label 1) is the positive class. A ratio whose denominator is
//! zero is [`Ratio::NotApplicable`], never zero.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::Label;
use crate::explain::Explanation;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions ({0}) and truths ({1}) differ in length")]
    LengthMismatch(usize, usize),
    #[error("no predictions to score")]
    EmptyInput,
    #[error("explanation has no entries")]
    EmptyExplanation,
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A metric value, or N/A when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    NotApplicable,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Ratio::NotApplicable
        } else {
            Ratio::Value(num / den)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::NotApplicable => None,
        }
    }

    /// Two-decimal rendering used in report tables.
    pub fn short(self) -> String {
        match self {
            Ratio::Value(v) => format!("{v:.2}"),
            Ratio::NotApplicable => "N/A".to_string(),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v}"),
            Ratio::NotApplicable => f.write_str("N/A"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => serializer.serialize_f64(*v),
            Ratio::NotApplicable => serializer.serialize_str("N/A"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(Ratio::Value(v)),
            Repr::Text(t) if t == "N/A" => Ok(Ratio::NotApplicable),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"N/A\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Ratio,
    pub fpr: Ratio,
    pub precision: Ratio,
    pub accuracy: Ratio,
    pub f1: Ratio,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.r#fn as f64);
        let tpr = Ratio::of(tp, tp + fn_);
        let precision = Ratio::of(tp, tp + fp);
        let f1 = match (precision, tpr) {
            (Ratio::Value(p), Ratio::Value(r)) => Ratio::of(2.0 * p * r, p + r),
            _ => Ratio::NotApplicable,
        };
        Self {
            tpr,
            fpr: Ratio::of(fp, fp + tn),
            precision,
            accuracy: Ratio::of(tp + tn, tp + fp + tn + fn_),
            f1,
            confusion: c,
        }
    }

    /// `metric,value` rows plus the confusion counts.
    pub fn to_csv(&self) -> String {
        let c = self.confusion;
        format!(
            "metric,value\ntpr,{}\nfpr,{}\nprecision,{}\naccuracy,{}\nf1,{}\ntp,{}\nfp,{}\ntn,{}\nfn,{}\n",
            self.tpr, self.fpr, self.precision, self.accuracy, self.f1, c.tp, c.fp, c.tn, c.r#fn
        )
    }
}

pub fn score(predictions: &[Label], truths: &[Label]) -> Result<Metrics, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut c = Confusion::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (Label::Malicious, Label::Malicious) => c.tp += 1,
            (Label::Malicious, Label::Legitimate) => c.fp += 1,
            (Label::Legitimate, Label::Legitimate) => c.tn += 1,
            (Label::Legitimate, Label::Malicious) => c.r#fn += 1,
        }
    }
    Ok(Metrics::from_confusion(c))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub method: String,
    pub tpr: Ratio,
    pub fpr: Ratio,
    pub precision: Ratio,
    pub accuracy: Ratio,
    pub f1: Ratio,
}

impl BaselineRow {
    pub fn from_metrics(method: &str, m: &Metrics) -> Self {
        Self {
            method: method.to_string(),
            tpr: m.tpr,
            fpr: m.fpr,
            precision: m.precision,
            accuracy: m.accuracy,
            f1: m.f1,
        }
    }

    /// Published figures for the Forta logistic-regression detector; only
    /// recall and precision were reported.
    pub fn forta() -> Self {
        Self {
            method: "Forta".to_string(),
            tpr: Ratio::Value(0.59),
            fpr: Ratio::NotApplicable,
            precision: Ratio::Value(0.88),
            accuracy: Ratio::NotApplicable,
            f1: Ratio::NotApplicable,
        }
    }
}

pub const ACCURACY_FOOTNOTE: &str =
    "accuracy on an imbalanced test set is dominated by the majority (legitimate) class";

/// Comparison CSV: our row first, then each baseline, N/A preserved.
pub fn compare_report(ours: &Metrics, baselines: &[BaselineRow]) -> String {
    let mut out = String::from("Method,TPR,FPR,Precision,Accuracy,F1Score\n");
    let rows = std::iter::once(BaselineRow::from_metrics("Proposed Method", ours)).chain(baselines.iter().cloned());
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method,
            r.tpr.short(),
            r.fpr.short(),
            r.precision.short(),
            r.accuracy.short(),
            r.f1.short()
        ));
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG bar chart of signed contributions: malicious-supporting bars rise
/// above the axis, legitimate-supporting bars hang below it.
pub fn contribution_svg(e: &Explanation) -> String {
    const BAR: f64 = 28.0;
    const GAP: f64 = 12.0;
    const HALF: f64 = 160.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 40.0;
    const LABELS: f64 = 120.0;

    let n = e.entries.len() as f64;
    let width = LEFT + n * (BAR + GAP) + GAP + 20.0;
    let height = TOP + 2.0 * HALF + LABELS;
    let axis = TOP + HALF;
    let max = e.entries.iter().map(|x| x.contribution).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { HALF / max } else { 0.0 };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    svg.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">Opcode contributions for {}</text>\n",
        xml_escape(&e.instance_id)
    ));
    svg.push_str(&format!(
        "  <text x=\"14\" y=\"{axis}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {axis})\" text-anchor=\"middle\">Contribution</text>\n"
    ));
    for (i, entry) in e.entries.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let h = entry.contribution * scale;
        let signed = entry.signed_contribution();
        let (y, fill) = if signed > 0.0 { (axis - h, "#1f4e9c") } else { (axis, "#e8a0b4") };
        svg.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{y}\" width=\"{BAR}\" height=\"{h}\" fill=\"{fill}\" stroke=\"black\"><title>{}: {signed}</title></rect>\n",
            xml_escape(&entry.feature)
        ));
        let lx = x + BAR / 2.0;
        let ly = TOP + 2.0 * HALF + 8.0;
        svg.push_str(&format!(
            "  <text x=\"{lx}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-90 {lx} {ly})\">{}</text>\n",
            xml_escape(&entry.feature)
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{axis}\" x2=\"{}\" y2=\"{axis}\" stroke=\"black\"/>\n",
        width - 10.0
    ));
    svg.push_str(&format!(
        "  <rect x=\"{}\" y=\"26\" width=\"10\" height=\"10\" fill=\"#1f4e9c\"/><text x=\"{}\" y=\"35\" font-family=\"sans-serif\" font-size=\"11\">Malicious</text>\n",
        width - 170.0,
        width - 156.0
    ));
    svg.push_str(&format!(
        "  <rect x=\"{}\" y=\"26\" width=\"10\" height=\"10\" fill=\"#e8a0b4\"/><text x=\"{}\" y=\"35\" font-family=\"sans-serif\" font-size=\"11\">Legitimate</text>\n",
        width - 90.0,
        width - 76.0
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Writes `path` (SVG) and a sibling `.csv` with the signed contributions.
/// Returns the CSV path.
pub fn emit_contribution_chart(e: &Explanation, path: &Path) -> Result<PathBuf, EvalError> {
    if e.entries.is_empty() {
        return Err(EvalError::EmptyExplanation);
    }
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    fs::write(path, contribution_svg(e)).map_err(io_err(path))?;
    let csv_path = path.with_extension("csv");
    let mut buf = Vec::new();
    e.write_plot_csv(&mut buf).map_err(|err| EvalError::Io { path: csv_path.clone(), source: err.into() })?;
    fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;
    Ok(csv_path)
}
