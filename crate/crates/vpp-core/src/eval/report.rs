//! Sweep table emission as markdown and CSV with identical numerals:
//! every number is formatted once (two decimals, accuracy as percent) and
//! the same string lands in both outputs.

use std::path::Path;

use crate::{Error, Result};

use super::sweep::{SweepParam, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::contract(format!("unknown report format {other:?}"))),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

fn pct(v: f64) -> String {
    if v.is_finite() {
        format!("{:.2}", v * 100.0)
    } else {
        "n/a".to_string()
    }
}

struct RowStrings {
    value: String,
    n: String,
    mean: String,
    spread: String,
    fingerprint: String,
}

fn row_strings(table: &SweepTable) -> Vec<RowStrings> {
    table
        .rows
        .iter()
        .map(|r| RowStrings {
            value: r.value.clone(),
            n: r.cells.len().to_string(),
            mean: pct(r.mean),
            spread: pct(r.spread),
            fingerprint: r
                .cells
                .first()
                .map(|c| c.fingerprint.clone())
                .unwrap_or_default(),
        })
        .collect()
}

/// The component table carries an improvement row: full minus baseline.
fn delta_string(table: &SweepTable) -> Option<String> {
    if table.param != SweepParam::Components {
        return None;
    }
    let none = table.row("none")?;
    let both = table.row("both")?;
    if !none.mean.is_finite() || !both.mean.is_finite() {
        return None;
    }
    let delta = (both.mean - none.mean) * 100.0;
    Some(format!("({}{:.2})", if delta >= 0.0 { "+" } else { "" }, delta))
}

/// Renders the table in the requested format.
pub fn render_report(table: &SweepTable, format: ReportFormat) -> String {
    let rows = row_strings(table);
    let delta = delta_string(table);
    let threshold = format!("{:.2}", table.threshold);
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str(&format!(
                "# sweep: {} (Acc@{threshold}, percent)\n\n",
                table.param.name()
            ));
            out.push_str(&format!("corpus: {}\n\n", table.corpus_id));
            out.push_str("| value | seeds | mean | spread | fingerprint |\n");
            out.push_str("|---|---|---|---|---|\n");
            for r in &rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    r.value, r.n, r.mean, r.spread, r.fingerprint
                ));
            }
            if let Some(d) = &delta {
                out.push_str(&format!("| delta both-none | | {d} | | |\n"));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str("value,seeds,mean,spread,fingerprint\n");
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.value, r.n, r.mean, r.spread, r.fingerprint
                ));
            }
            if let Some(d) = &delta {
                out.push_str(&format!("delta both-none,,{d},,\n"));
            }
            out
        }
    }
}

/// Writes the rendered report to `<dir>/sweep-<param>.<ext>`.
pub fn emit_report(table: &SweepTable, format: ReportFormat, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("sweep-{}.{}", table.param.name(), format.extension()));
    std::fs::write(&path, render_report(table, format)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::sweep::{SweepCell, SweepRow};

    fn table_with(rows: Vec<SweepRow>) -> SweepTable {
        SweepTable {
            param: SweepParam::Components,
            threshold: 0.5,
            rows,
            corpus_id: "synth(test)".to_string(),
        }
    }

    fn row(value: &str, accs: &[f64]) -> SweepRow {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
        SweepRow {
            value: value.to_string(),
            cells: accs
                .iter()
                .enumerate()
                .map(|(i, &a)| SweepCell {
                    value: value.to_string(),
                    seed: i as u64,
                    accuracy: a,
                    parse_failures: 0,
                    epoch_losses: vec![],
                    fingerprint: "cafe".to_string(),
                })
                .collect(),
            mean,
            spread: var.sqrt(),
        }
    }

    #[test]
    fn empty_table_renders_header_only() {
        let t = table_with(vec![]);
        let md = render_report(&t, ReportFormat::Markdown);
        assert!(md.contains("| value |"));
        let csv = render_report(&t, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn component_table_has_delta_row() {
        let t = table_with(vec![
            row("none", &[0.40, 0.42, 0.44]),
            row("global", &[0.43, 0.45, 0.44]),
            row("local", &[0.41, 0.42, 0.40]),
            row("both", &[0.48, 0.50, 0.49]),
        ]);
        let md = render_report(&t, ReportFormat::Markdown);
        assert!(md.contains("(+7.00)"), "{md}");
        let csv = render_report(&t, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 1 + 4 + 1);
    }

    #[test]
    fn markdown_and_csv_share_numerals() {
        let t = table_with(vec![
            row("none", &[0.401, 0.423]),
            row("both", &[0.487, 0.502]),
        ]);
        let md = render_report(&t, ReportFormat::Markdown);
        let csv = render_report(&t, ReportFormat::Csv);
        let nums = |s: &str| {
            regex::Regex::new(r"-?\d+\.\d{2}")
                .unwrap()
                .find_iter(s)
                .map(|m| m.as_str().to_string())
                .collect::<Vec<_>>()
        };
        let md_nums: Vec<String> = nums(&md).into_iter().filter(|n| n != "0.50").collect();
        let csv_nums = nums(&csv);
        assert_eq!(md_nums, csv_nums);
    }

    #[test]
    fn csv_roundtrips_at_stored_precision() {
        let t = table_with(vec![row("none", &[0.4012, 0.4230])]);
        let csv = render_report(&t, ReportFormat::Csv);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "none");
        let mean: f64 = fields[2].parse().unwrap();
        assert_eq!(format!("{mean:.2}"), fields[2]);
    }
}
