use std::fmt::Write as _;

use super::EvalReport;
use crate::corpus::StanceLabel;

pub const CSV_HEADER: &str = "name,acc,balanced_acc,f1_micro,f1_macro,auc_supportive,auc_against,auc_neutral";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub n: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    /// Per-class AUC in [`StanceLabel::ALL`] order.
    pub auc: [Option<f64>; 3],
}

/// Named reports ordered by ascending accuracy, ties by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_reports(reports: &[(String, EvalReport)]) -> Comparison {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.clone(),
            n: r.n_scored,
            accuracy: r.accuracy,
            balanced_accuracy: r.balanced_accuracy,
            f1_micro: r.f1_micro,
            f1_macro: r.f1_macro,
            auc: std::array::from_fn(|i| r.auc(StanceLabel::ALL[i])),
        })
        .collect();
    rows.sort_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then_with(|| a.name.cmp(&b.name)));
    Comparison { rows }
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn opt_pct(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_else(|| "-".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Comparison {
    /// Aligned table with percentages. F1 is reported both micro- and
    /// macro-averaged.
    pub fn to_text(&self) -> String {
        let header = [
            "Model / prompt",
            "n",
            "Acc",
            "Bal.Acc",
            "F1 micro",
            "F1 macro",
            "AUC sup",
            "AUC ag",
            "AUC neu",
        ];
        let body: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.n.to_string(),
                    pct(r.accuracy),
                    pct(r.balanced_accuracy),
                    pct(r.f1_micro),
                    pct(r.f1_macro),
                    opt_pct(r.auc[0]),
                    opt_pct(r.auc[1]),
                    opt_pct(r.auc[2]),
                ]
            })
            .collect();
        let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &body {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate() {
                let pad = width[i] - c.chars().count();
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str("  ");
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&mut out, &header);
        let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &body {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    /// Machine-readable form with fractions to six decimals; missing AUC
    /// values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let auc = r.auc.map(|a| a.map(|v| format!("{v:.6}")).unwrap_or_default());
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                csv_field(&r.name),
                r.accuracy,
                r.balanced_accuracy,
                r.f1_micro,
                r.f1_macro,
                auc[0],
                auc[1],
                auc[2]
            );
        }
        out
    }
}
