use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalReport, Group, Stage};
use crate::error::{Error, Result};
use crate::variants::MultilingualSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "em")]
    ExactMatch,
    #[serde(rename = "f1")]
    F1,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::ExactMatch, Metric::F1];

    pub fn file_stem(self) -> &'static str {
        match self {
            Metric::ExactMatch => "em",
            Metric::F1 => "f1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::ExactMatch => "EM",
            Metric::F1 => "F1",
        }
    }

    fn of(self, g: &Group) -> Option<f64> {
        match self {
            Metric::ExactMatch => g.exact_match,
            Metric::F1 => g.f1,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" | "exact_match" => Ok(Metric::ExactMatch),
            "f1" => Ok(Metric::F1),
            _ => Err(Error::Config(format!("unknown metric {s:?} (em, f1)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Markdown => "md",
            TableFormat::Csv => "csv",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(Error::Config(format!("unknown table format {s:?} (markdown, csv)"))),
        }
    }
}

/// Externally reported scores shown above the model rows, one value per setting in
/// `Q_E-P_E, Q_E-P_H, Q_H-P_E, Q_H-P_H` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRow {
    pub dataset: String,
    pub metric: Metric,
    #[serde(default = "default_baseline_label")]
    pub label: String,
    pub values: Vec<f64>,
}

fn default_baseline_label() -> String {
    "Baseline".to_string()
}

impl BaselineRow {
    pub fn value(&self, setting: MultilingualSetting) -> Option<f64> {
        let i = MultilingualSetting::ALL.iter().position(|&s| s == setting)?;
        self.values.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub dataset: String,
    pub metric: Metric,
    pub text: String,
}

struct Row {
    label: String,
    values: Vec<Option<f64>>,
}

/// One table: rows are the baseline (if any) then the fine-tune stages present in the
/// report; columns are the settings present for `dataset`, in report order. The maximum of
/// each column is bold in markdown and suffixed with `*` in CSV.
pub fn emit_table(
    report: &EvalReport,
    dataset: &str,
    metric: Metric,
    format: TableFormat,
    baseline: Option<&BaselineRow>,
) -> String {
    let groups: Vec<&Group> = report.groups.iter().filter(|g| g.dataset == dataset).collect();
    let columns: Vec<MultilingualSetting> = MultilingualSetting::ALL
        .into_iter()
        .filter(|s| groups.iter().any(|g| g.setting == *s))
        .collect();
    let mut rows = Vec::new();
    if let Some(b) = baseline {
        rows.push(Row {
            label: b.label.clone(),
            values: columns.iter().map(|&s| b.value(s)).collect(),
        });
    }
    for stage in Stage::ALL {
        if !groups.iter().any(|g| g.stage == stage) {
            continue;
        }
        let values = columns
            .iter()
            .map(|&s| {
                groups
                    .iter()
                    .find(|g| g.stage == stage && g.setting == s)
                    .and_then(|g| metric.of(g))
            })
            .collect();
        rows.push(Row {
            label: stage.label(report.cross_setting),
            values,
        });
    }
    let maxima: Vec<Option<f64>> = (0..columns.len())
        .map(|j| rows.iter().filter_map(|r| r.values[j]).reduce(f64::max))
        .collect();
    let cell = |v: Option<f64>, j: usize| match v {
        None => "n/a".to_string(),
        Some(x) if Some(x) == maxima[j] => match format {
            TableFormat::Markdown => format!("**{x:.2}**"),
            TableFormat::Csv => format!("{x:.2}*"),
        },
        Some(x) => format!("{x:.2}"),
    };

    let header: Vec<String> = std::iter::once("Fine-tune setting".to_string())
        .chain(columns.iter().map(|s| s.label()))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            std::iter::once(r.label.clone())
                .chain(r.values.iter().enumerate().map(|(j, &v)| cell(v, j)))
                .collect()
        })
        .collect();

    match format {
        TableFormat::Markdown => {
            let mut out = format!("### {} {}\n\n", dataset, metric.title());
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for r in &body {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in std::iter::once(&header).chain(&body) {
                w.write_record(r).expect("in-memory csv write");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
        }
    }
}

/// Every (dataset, metric) table of the report, datasets in name order, EM before F1.
pub fn emit_tables(report: &EvalReport, format: TableFormat, baselines: &[BaselineRow]) -> Vec<RenderedTable> {
    let mut out = Vec::new();
    for dataset in report.datasets() {
        for metric in Metric::ALL {
            let baseline = baselines.iter().find(|b| b.dataset == dataset && b.metric == metric);
            out.push(RenderedTable {
                dataset: dataset.to_string(),
                metric,
                text: emit_table(report, dataset, metric, format, baseline),
            });
        }
    }
    out
}

/// Writes `<metric>_<dataset>.<ext>` files into `dir`.
pub fn write_tables(report: &EvalReport, baselines: &[BaselineRow], dir: &Path, format: TableFormat) -> Result<Vec<PathBuf>> {
    emit_tables(report, format, baselines)
        .into_iter()
        .map(|t| {
            let path = dir.join(format!("{}_{}.{}", t.metric.file_stem(), t.dataset, format.extension()));
            fs::write(&path, &t.text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{Cell, CellOutcome};
    use super::*;
    use crate::metrics::ScorePair;

    fn cell(stage: Stage, run: usize, setting: MultilingualSetting, em: f64) -> Cell {
        Cell {
            stage,
            run,
            seed: run as u64,
            dataset: "d".into(),
            setting,
            predictions: PathBuf::new(),
            reused: false,
            outcome: CellOutcome::Scored(ScorePair {
                exact_match: Some(em),
                f1: Some(em),
                count: 1,
                missing: 0,
            }),
        }
    }

    #[test]
    fn single_cell_is_its_own_maximum() {
        let r = EvalReport::from_cells(vec![cell(Stage::ZeroShot, 0, MultilingualSetting::EN_EN, 42.0)], MultilingualSetting::EN_HI);
        let t = emit_table(&r, "d", Metric::ExactMatch, TableFormat::Markdown, None);
        assert_eq!(
            t,
            "### d EM\n\n| Fine-tune setting | Q_E-P_E |\n|---|---|\n| Zero Shot | **42.00** |\n"
        );
    }

    #[test]
    fn column_maximum_is_marked() {
        let s = MultilingualSetting::HI_HI;
        let r = EvalReport::from_cells(
            vec![cell(Stage::ZeroShot, 0, s, 10.0), cell(Stage::MonoAug, 0, s, 20.0), cell(Stage::CrossAug, 0, s, 15.0)],
            MultilingualSetting::EN_HI,
        );
        let csv = emit_table(&r, "d", Metric::F1, TableFormat::Csv, None);
        assert_eq!(
            csv,
            "Fine-tune setting,Q_H-P_H\nZero Shot,10.00\nwith Q_H-P_H Aug.,20.00*\nwith Q_E-P_H Aug.,15.00\n"
        );
    }

    #[test]
    fn baseline_row_comes_first_and_competes_for_the_maximum() {
        let cells = MultilingualSetting::ALL
            .into_iter()
            .map(|s| cell(Stage::ZeroShot, 0, s, 50.0))
            .collect();
        let r = EvalReport::from_cells(cells, MultilingualSetting::EN_HI);
        let b = BaselineRow {
            dataset: "d".into(),
            metric: Metric::ExactMatch,
            label: "Baseline".into(),
            values: vec![53.15, 45.34, 44.19, 51.34],
        };
        let t = emit_table(&r, "d", Metric::ExactMatch, TableFormat::Markdown, Some(&b));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[2], "| Fine-tune setting | Q_E-P_E | Q_E-P_H | Q_H-P_E | Q_H-P_H |");
        assert_eq!(lines[4], "| Baseline | **53.15** | 45.34 | 44.19 | **51.34** |");
        assert_eq!(lines[5], "| Zero Shot | 50.00 | **50.00** | **50.00** | 50.00 |");
    }

    #[test]
    fn parses_formats_and_metrics() {
        assert_eq!("md".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
        assert_eq!("CSV".parse::<TableFormat>().unwrap(), TableFormat::Csv);
        assert_eq!("em".parse::<Metric>().unwrap(), Metric::ExactMatch);
        assert!("bleu".parse::<Metric>().is_err());
    }
}
