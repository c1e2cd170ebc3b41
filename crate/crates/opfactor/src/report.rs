//! Text and image renderings of evaluation results: matrix CSV, accuracy
//! reports, sweep tables, PGM/SVG heatmaps and marked Markdown tables.

use std::fmt::Write as _;

use opfactor_core::eval::{
    heatmap, mark_cells, AccuracyReport, CellMark, Confusion, DistanceMatrix, EvalError, MatrixKind,
    SweepRow,
};

use crate::pnm;

/// Text used for absent cells.
pub const ABSENT: &str = "-";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("matrix csv: {0}")]
    Malformed(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("in-memory csv writer flushes");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// `label,<col labels...>` header, one row per matrix row; values use the
/// shortest representation that parses back to the same `f64`.
pub fn matrix_to_csv(m: &DistanceMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("label").chain(m.col_labels.iter().map(String::as_str));
    w.write_record(header).expect("in-memory write");
    for i in 0..m.rows() {
        let cells = m
            .row(i)
            .iter()
            .map(|v| v.map_or_else(|| ABSENT.to_string(), |v| v.to_string()));
        let record: Vec<String> = std::iter::once(m.row_labels[i].clone()).chain(cells).collect();
        w.write_record(&record).expect("in-memory write");
    }
    csv_bytes(w)
}

pub fn matrix_from_csv(text: &str, kind: MatrixKind) -> Result<DistanceMatrix, ReportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(ReportError::Malformed("first header cell must be `label`".into()));
    }
    let col_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    for record in r.records() {
        let record = record?;
        let mut cells = record.iter();
        row_labels.push(cells.next().unwrap_or_default().to_string());
        for cell in cells {
            let cell = cell.trim();
            values.push(if cell == ABSENT {
                None
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| ReportError::Malformed(format!("`{cell}` is not a number")))?;
                Some(v)
            });
        }
    }
    Ok(DistanceMatrix::new(row_labels, col_labels, values, kind)?)
}

/// One row per scope: all pairs, each identity, and the identity-average
/// reading.
pub fn accuracy_to_csv(report: &AccuracyReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scope", "label", "threshold", "true_positives", "false_positives", "true_negatives",
        "false_negatives", "accuracy",
    ])
    .expect("in-memory write");
    let mut row = |scope: &str, label: &str, c: &Confusion, acc: Option<f64>| {
        w.write_record([
            scope.to_string(),
            label.to_string(),
            report.threshold.to_string(),
            c.true_positives.to_string(),
            c.false_positives.to_string(),
            c.true_negatives.to_string(),
            c.false_negatives.to_string(),
            acc.map_or_else(|| ABSENT.to_string(), |a| a.to_string()),
        ])
        .expect("in-memory write");
    };
    row("pairs", "", &report.confusion, Some(report.accuracy));
    for b in &report.per_identity {
        row("identity", &b.label, &b.confusion, b.accuracy);
    }
    row("identity_average", "", &report.identity_level, report.identity_level_accuracy);
    csv_bytes(w)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["duration", "samples", "valid", "accuracy", "errors"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.duration.to_string(),
            r.samples.to_string(),
            r.is_valid().to_string(),
            r.accuracy().map_or_else(|| ABSENT.to_string(), |a| a.to_string()),
            r.errors.join("; "),
        ])
        .expect("in-memory write");
    }
    csv_bytes(w)
}

/// Binary PGM of the matrix heatmap, each cell `cell_px` pixels square.
pub fn heatmap_pgm(m: &DistanceMatrix, cell_px: usize) -> Vec<u8> {
    let (w, h, levels) = heatmap(m).raster(cell_px);
    pnm::write_pgm(w, h, &levels)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Labeled SVG heatmap; hovering a cell shows its value.
pub fn heatmap_svg(m: &DistanceMatrix, cell_px: usize) -> String {
    let hm = heatmap(m);
    let cell = cell_px.max(4);
    let longest = m
        .row_labels
        .iter()
        .chain(&m.col_labels)
        .map(|l| l.chars().count())
        .max()
        .unwrap_or(0);
    let margin = 8 + 7 * longest;
    let (w, h) = (margin + cell * m.cols(), margin + cell * m.rows());
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="11">"#
    );
    for (j, label) in m.col_labels.iter().enumerate() {
        let x = margin + j * cell + cell / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{t}</text>"#,
            y = margin - 4,
            t = xml_escape(label)
        );
    }
    for (i, label) in m.row_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="end">{t}</text>"#,
            x = margin - 4,
            y = margin + i * cell + cell / 2 + 4,
            t = xml_escape(label)
        );
        for j in 0..m.cols() {
            let g = hm.level(i, j);
            let title = m.get(i, j).map_or_else(|| ABSENT.to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({g},{g},{g})"><title>{title}</title></rect>"#,
                x = margin + j * cell,
                y = margin + i * cell,
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Markdown table with same-identity cells within threshold in bold,
/// cross-identity cells within threshold tagged `(FP)` and same-identity
/// cells beyond it tagged `(FN)`.
pub fn marked_table(m: &DistanceMatrix, threshold: f64) -> String {
    let marks = mark_cells(m, threshold);
    let mut s = String::from("|");
    for l in &m.col_labels {
        let _ = write!(s, " | {l}");
    }
    s.push_str(" |\n|---");
    s.push_str(&"|---:".repeat(m.cols()));
    s.push_str("|\n");
    for i in 0..m.rows() {
        let _ = write!(s, "| {}", m.row_labels[i]);
        for j in 0..m.cols() {
            let text = match (m.get(i, j), marks[i * m.cols() + j]) {
                (Some(v), CellMark::TruePositive) => format!("**{v}**"),
                (Some(v), CellMark::FalsePositive) => format!("{v} (FP)"),
                (Some(v), CellMark::FalseNegative) => format!("{v} (FN)"),
                (Some(v), _) => v.to_string(),
                (None, _) => ABSENT.to_string(),
            };
            let _ = write!(s, " | {text}");
        }
        s.push_str(" |\n");
    }
    s
}
