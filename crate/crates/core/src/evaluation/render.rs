use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::EvaluationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `report.txt` (condition × model grid) and `per_company.txt`.
    TableText,
    /// `report.records`: one JSON object per summary row.
    StructuredRecords,
    /// `distributions/<source>.records`: score counts per source.
    HistogramData,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFile {
    pub path: PathBuf,
    pub contents: String,
}

/// Half-up to two decimals; undefined renders as `NaN`.
pub fn fmt_stat(v: Option<f64>) -> String {
    match v {
        None => "NaN".to_string(),
        Some(x) => {
            let mut r = (x * 100.0).round() / 100.0;
            if r == 0.0 {
                r = 0.0; // no "-0.00"
            }
            format!("{r:.2}")
        }
    }
}

fn grid(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            // text columns left-aligned, numbers right-aligned
            if i + 3 >= widths.len() {
                let _ = write!(out, "{cell:>w$}");
            } else {
                let _ = write!(out, "{cell:<w$}");
            }
        }
        out.trim_end().to_string()
    };
    let mut text = line(header.to_vec());
    text.push('\n');
    for row in rows {
        text.push_str(&line(row.iter().map(String::as_str).collect()));
        text.push('\n');
    }
    text
}

pub fn render_condition_table(r: &EvaluationReport) -> String {
    let mut rows = Vec::new();
    for &c in &r.conditions {
        for (key, s) in r.per_condition.iter().filter(|(k, _)| k.condition == c) {
            rows.push(vec![
                c.name(),
                key.model_id.clone(),
                fmt_stat(Some(s.concordance)),
                fmt_stat(s.spearman),
                fmt_stat(s.kendall),
            ]);
        }
    }
    let mut text = grid(&["Condition", "Model", "Concordance", "Spearman", "Kendall"], &rows);

    let mut notes = String::new();
    let ns: std::collections::BTreeMap<&str, usize> = r
        .per_condition
        .iter()
        .map(|(k, s)| (k.model_id.as_str(), s.n))
        .collect();
    for (model, n) in ns {
        let _ = writeln!(notes, "pairs {model}: {n}");
    }
    if let Some(ir) = &r.inter_rater {
        let _ = writeln!(
            notes,
            "inter-rater: n={} agreement={} kappa={}",
            ir.n,
            fmt_stat(Some(ir.agreement)),
            fmt_stat(ir.kappa)
        );
    }
    if !r.excluded.is_empty() {
        let _ = writeln!(notes, "excluded (rating failed): {}", r.excluded.len());
        for f in &r.excluded {
            let _ = writeln!(notes, "  {} {} {}: {}", f.model_id, f.company_id, f.month, f.reason);
        }
    }
    if !r.skipped_months.is_empty() {
        let _ = writeln!(notes, "skipped months (no timely disclosures): {}", r.skipped_months.len());
        for s in &r.skipped_months {
            let _ = writeln!(notes, "  {} {}", s.company_id, s.month);
        }
    }
    if !notes.is_empty() {
        text.push('\n');
        text.push_str(&notes);
    }
    text
}

pub fn render_company_table(r: &EvaluationReport) -> String {
    let mut text = String::new();
    for (i, (model, companies)) in r.per_company.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let _ = writeln!(text, "Model: {model} ({})", r.per_company_condition.name());
        let mut rows: Vec<Vec<String>> = companies
            .values()
            .map(|row| {
                vec![
                    row.company_name.clone(),
                    fmt_stat(Some(row.summary.concordance)),
                    fmt_stat(row.summary.spearman),
                    fmt_stat(row.summary.kendall),
                ]
            })
            .collect();
        rows.sort();
        text.push_str(&grid(&["Company", "Concordance", "Spearman", "Kendall"], &rows));
    }
    text
}

fn opt(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| json!(x))
}

pub fn render_records(r: &EvaluationReport) -> String {
    let mut out = String::new();
    for (k, s) in &r.per_condition {
        let rec = json!({
            "kind": "condition",
            "condition": k.condition,
            "model_id": k.model_id,
            "n": s.n,
            "concordance": s.concordance,
            "spearman": opt(s.spearman),
            "kendall": opt(s.kendall),
        });
        let _ = writeln!(out, "{rec}");
    }
    for (model, companies) in &r.per_company {
        for (id, row) in companies {
            let rec = json!({
                "kind": "company",
                "condition": r.per_company_condition,
                "model_id": model,
                "company_id": id,
                "company_name": row.company_name,
                "n": row.summary.n,
                "concordance": row.summary.concordance,
                "spearman": opt(row.summary.spearman),
                "kendall": opt(row.summary.kendall),
            });
            let _ = writeln!(out, "{rec}");
        }
    }
    out
}

fn source_file_name(source: &str) -> String {
    let clean: String = source
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-.".contains(c) { c } else { '_' })
        .collect();
    format!("{clean}.records")
}

pub fn render_histograms(r: &EvaluationReport) -> Vec<RenderedFile> {
    r.distributions
        .iter()
        .map(|h| {
            let mut contents = String::new();
            for (i, count) in h.counts.iter().enumerate() {
                let rec = json!({"source": h.source, "score": i + 1, "count": count});
                let _ = writeln!(contents, "{rec}");
            }
            RenderedFile {
                path: Path::new("distributions").join(source_file_name(&h.source)),
                contents,
            }
        })
        .collect()
}

pub fn render_report(r: &EvaluationReport, format: ReportFormat) -> Vec<RenderedFile> {
    match format {
        ReportFormat::TableText => vec![
            RenderedFile {
                path: "report.txt".into(),
                contents: render_condition_table(r),
            },
            RenderedFile {
                path: "per_company.txt".into(),
                contents: render_company_table(r),
            },
        ],
        ReportFormat::StructuredRecords => vec![RenderedFile {
            path: "report.records".into(),
            contents: render_records(r),
        }],
        ReportFormat::HistogramData => render_histograms(r),
    }
}

/// Writes every format under `dir`; returns the written paths.
pub fn write_report(r: &EvaluationReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for format in [ReportFormat::TableText, ReportFormat::StructuredRecords, ReportFormat::HistogramData] {
        for file in render_report(r, format) {
            let path = dir.join(&file.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, file.contents)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::adjust::Condition;
    use crate::evaluation::{CompanyRow, ConditionKey};
    use crate::ingest::CompanyId;
    use crate::metrics::AgreementSummary;

    fn report(rows: Vec<(Condition, &str, f64, Option<f64>, Option<f64>)>) -> EvaluationReport {
        let mut per_condition = BTreeMap::new();
        let mut conditions = Vec::new();
        for (c, m, con, sp, ke) in rows {
            conditions.push(c);
            per_condition.insert(
                ConditionKey {
                    condition: c,
                    model_id: m.into(),
                },
                AgreementSummary {
                    n: 815,
                    concordance: con,
                    spearman: sp,
                    kendall: ke,
                },
            );
        }
        conditions.sort();
        conditions.dedup();
        EvaluationReport {
            conditions,
            per_condition,
            per_company_condition: Condition::C2,
            per_company: BTreeMap::new(),
            distributions: Vec::new(),
            skipped_months: Vec::new(),
            excluded: Vec::new(),
            inter_rater: None,
        }
    }

    #[test]
    fn stat_formatting() {
        assert_eq!(fmt_stat(Some(0.615)), "0.62");
        assert_eq!(fmt_stat(Some(0.8249)), "0.82");
        assert_eq!(fmt_stat(Some(-0.001)), "0.00");
        assert_eq!(fmt_stat(Some(-0.04)), "-0.04");
        assert_eq!(fmt_stat(Some(1.0)), "1.00");
        assert_eq!(fmt_stat(None), "NaN");
    }

    #[test]
    fn table_row_carries_three_statistics() {
        let r = report(vec![(Condition::C2, "gpt-4", 0.82, Some(0.61), Some(0.59))]);
        let text = render_condition_table(&r);
        let row = text.lines().find(|l| l.contains("gpt-4")).unwrap();
        let tokens: Vec<_> = row.split_whitespace().collect();
        assert_eq!(tokens, ["Condition", "2", "gpt-4", "0.82", "0.61", "0.59"]);
    }

    #[test]
    fn inter_rater_line() {
        let mut r = report(vec![(Condition::C1, "gpt-4", 0.5, Some(0.4), Some(0.3))]);
        r.inter_rater = Some(crate::metrics::InterRaterAgreement {
            n: 815,
            agreement: 0.68,
            kappa: Some(0.352),
        });
        let text = render_condition_table(&r);
        assert!(text.contains("inter-rater: n=815 agreement=0.68 kappa=0.35\n"), "{text}");
    }

    #[test]
    fn undefined_renders_nan() {
        let mut r = report(vec![]);
        let mut companies = BTreeMap::new();
        companies.insert(
            CompanyId::new("373220"),
            CompanyRow {
                company_name: "LG Energy Solution".into(),
                summary: AgreementSummary {
                    n: 16,
                    concordance: 0.6875,
                    spearman: None,
                    kendall: None,
                },
            },
        );
        r.per_company.insert("gpt-4".into(), companies);
        let text = render_company_table(&r);
        let row = text.lines().find(|l| l.starts_with("LG Energy")).unwrap();
        assert!(row.split_whitespace().collect::<Vec<_>>().ends_with(&["0.69", "NaN", "NaN"]));
    }

    #[test]
    fn empty_condition_set_is_header_only() {
        let text = render_condition_table(&report(vec![]));
        assert_eq!(text, "Condition  Model  Concordance  Spearman  Kendall\n");
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(source_file_name("gpt-4/C2"), "gpt-4_C2.records");
        assert_eq!(source_file_name("human"), "human.records");
    }
}
