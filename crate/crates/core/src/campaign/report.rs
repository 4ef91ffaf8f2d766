//! Cross-metric BD-Rate tables, Spearman correlation and heatmaps.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

/// Rank correlation with average ranks for ties. `None` when either
/// input has zero rank variance or the lengths are unusable.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| v.is_nan()) {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One optimisation configuration column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub name: String,
    /// Encodes with chroma offsets.
    pub chroma_offsets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub metric: String,
    pub dynamic_range: String,
    pub plane: String,
    /// BD-Rate in percent per column; `None` for missing cells.
    pub values: Vec<Option<f64>>,
}

/// Evaluation metrics × optimisation configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMetricTable {
    pub columns: Vec<TableColumn>,
    pub rows: Vec<TableRow>,
}

/// Highlighted cells of one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RowMarks {
    /// Best (lowest) cell among columns without chroma offsets.
    pub bold: Option<usize>,
    /// Best cell among chroma-offset columns, shown bold and underlined.
    pub underline: Option<usize>,
}

fn argmin(values: &[Option<f64>], keep: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if keep(i) && best.is_none_or(|(_, b)| *v < b) {
                best = Some((i, *v));
            }
        }
    }
    best.map(|(i, _)| i)
}

impl CrossMetricTable {
    pub fn marks(&self, row: &TableRow) -> RowMarks {
        RowMarks {
            bold: argmin(&row.values, |i| !self.columns[i].chroma_offsets),
            underline: argmin(&row.values, |i| self.columns[i].chroma_offsets),
        }
    }

    pub fn all_marks(&self) -> Vec<RowMarks> {
        self.rows.iter().map(|r| self.marks(r)).collect()
    }

    /// Markdown table: bold is `**x**`, bold+underline is `<u>**x**</u>`.
    pub fn render_markdown(&self) -> String {
        let mut out = String::from("| Metric | DR | Plane |");
        for c in &self.columns {
            let _ = write!(out, " {} |", c.name);
        }
        out.push_str("\n|---|---|---|");
        for _ in &self.columns {
            out.push_str("---:|");
        }
        out.push('\n');
        for row in &self.rows {
            let marks = self.marks(row);
            let _ = write!(out, "| {} | {} | {} |", row.metric, row.dynamic_range, row.plane);
            for (i, v) in row.values.iter().enumerate() {
                let cell = match v {
                    None => String::new(),
                    Some(v) if marks.underline == Some(i) => format!("<u>**{v:.3}**</u>"),
                    Some(v) if marks.bold == Some(i) => format!("**{v:.3}**"),
                    Some(v) => format!("{v:.3}"),
                };
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with columns `metric,dr,plane,<configs...>`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string(), "dr".into(), "plane".into()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).expect("in-memory csv");
        for row in &self.rows {
            let mut rec = vec![row.metric.clone(), row.dynamic_range.clone(), row.plane.clone()];
            rec.extend(row.values.iter().map(|v| v.map(|v| format!("{v}")).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// A table with the highlights it is expected to carry.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTable {
    pub table: CrossMetricTable,
    pub expected: Vec<RowMarks>,
}

/// Reads a marked table from CSV.
///
/// Header: `metric,dr,plane,<columns...>,bold,underline`. Column names
/// ending in `+` use chroma offsets. `bold` and `underline` list the
/// highlighted column names separated by `|`; a bold+underlined cell is
/// listed in both.
pub fn read_marked_table<R: Read>(source: R) -> Result<MarkedTable, csv::Error> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rd.headers()?.clone();
    let names: Vec<String> = header
        .iter()
        .skip(3)
        .take(header.len().saturating_sub(5))
        .map(str::to_string)
        .collect();
    let columns: Vec<TableColumn> = names
        .iter()
        .map(|n| TableColumn {
            name: n.clone(),
            chroma_offsets: n.ends_with('+'),
        })
        .collect();
    let lookup = |field: &str| -> Vec<usize> {
        field
            .split('|')
            .filter(|s| !s.is_empty())
            .filter_map(|s| names.iter().position(|n| n == s))
            .collect()
    };
    let mut rows = Vec::new();
    let mut expected = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let values = (0..names.len())
            .map(|i| rec.get(3 + i).and_then(|s| s.parse::<f64>().ok()))
            .collect();
        let bold = lookup(rec.get(3 + names.len()).unwrap_or(""));
        let underline = lookup(rec.get(4 + names.len()).unwrap_or(""));
        expected.push(RowMarks {
            bold: bold.iter().copied().find(|&i| !columns[i].chroma_offsets),
            underline: underline.first().copied(),
        });
        rows.push(TableRow {
            metric: rec.get(0).unwrap_or("").to_string(),
            dynamic_range: rec.get(1).unwrap_or("").to_string(),
            plane: rec.get(2).unwrap_or("").to_string(),
            values,
        });
    }
    Ok(MarkedTable {
        table: CrossMetricTable { columns, rows },
        expected,
    })
}

/// Symmetric metric × metric rank-correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<String>,
    /// `None` where Spearman is undefined.
    pub rho: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    /// Correlates the per-sample BD-Rates of each metric.
    pub fn from_samples(metrics: Vec<String>, samples: &[Vec<f64>]) -> Self {
        let n = metrics.len();
        let mut rho = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i..n {
                let r = if i == j && spearman(&samples[i], &samples[i]).is_some() {
                    Some(1.0)
                } else {
                    spearman(&samples[i], &samples[j])
                };
                rho[i][j] = r;
                rho[j][i] = r;
            }
        }
        CorrelationMatrix { metrics, rho }
    }

    /// Undefined cells are left blank.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.metrics.iter().cloned());
        w.write_record(&header).expect("in-memory csv");
        for (m, row) in self.metrics.iter().zip(&self.rho) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|v| v.map(|v| format!("{v:.6}")).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    /// Standalone SVG heatmap with numeric labels.
    pub fn to_svg(&self) -> String {
        let n = self.metrics.len();
        let cell = 56.0;
        let margin = 110.0;
        let size = margin + cell * n as f64 + 20.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (i, name) in self.metrics.iter().enumerate() {
            let c = margin + cell * (i as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y}" text-anchor="end" dominant-baseline="middle">{name}</text>"#,
                x = margin - 6.0,
                y = c,
                name = xml_escape(name)
            );
            let _ = writeln!(
                s,
                r#"<text x="{c}" y="{y}" text-anchor="start" transform="rotate(-45 {c} {y})">{name}</text>"#,
                y = margin - 6.0,
                name = xml_escape(name)
            );
        }
        for (i, row) in self.rho.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let x = margin + cell * j as f64;
                let y = margin + cell * i as f64;
                let (fill, label) = match v {
                    Some(r) => (colour(*r), format!("{r:.2}")),
                    None => ("#dddddd".to_string(), "n/a".to_string()),
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{tx}" y="{ty}" text-anchor="middle" dominant-baseline="middle">{label}</text>"#,
                    tx = x + cell / 2.0,
                    ty = y + cell / 2.0
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Diverging blue-white-red scale over [-1, 1].
fn colour(r: f64) -> String {
    let r = r.clamp(-1.0, 1.0);
    let (red, green, blue) = if r >= 0.0 {
        (255.0, 255.0 * (1.0 - r), 255.0 * (1.0 - r))
    } else {
        (255.0 * (1.0 + r), 255.0 * (1.0 + r), 255.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        red.round() as u8,
        green.round() as u8,
        blue.round() as u8
    )
}
