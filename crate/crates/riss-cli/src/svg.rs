//! Deterministic SVG rendering of the CSV artifacts: fixed viewport, fixed
//! precision, no timestamps, so byte equality holds across runs.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("csv has a header but no data rows")]
    Empty,
    #[error("csv line {0}: {1}")]
    Parse(usize, String),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("log scale needs positive values, got {0}")]
    NonpositiveLog(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// Line chart, first column x, chosen column y.
    Line,
    /// Scatter of "re,im,label" rows with symmetric axes.
    Constellation,
    /// Gray raster of "x,z,magnitude" rows.
    Heatmap,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(text: &str) -> Result<Csv, SvgError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(SvgError::Empty);
    }
    Ok(Csv { header, rows })
}

fn num(csv: &Csv, row: usize, col: usize) -> Result<f64, SvgError> {
    csv.rows[row]
        .get(col)
        .ok_or_else(|| SvgError::Parse(row + 2, "missing column".into()))?
        .parse::<f64>()
        .map_err(|e| SvgError::Parse(row + 2, e.to_string()))
}

fn axis_ticks(min: f64, max: f64) -> Vec<f64> {
    (0..=4).map(|i| min + (max - min) * i as f64 / 4.0).collect()
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-300);
        MARGIN + (v - self.x_min) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-300);
        HEIGHT - MARGIN - (v - self.y_min) / span * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open_svg(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN;
    let x1 = WIDTH - MARGIN;
    let y0 = HEIGHT - MARGIN;
    let y1 = MARGIN;
    let _ = writeln!(
        out,
        "<path d=\"M {x0:.3} {y1:.3} L {x0:.3} {y0:.3} L {x1:.3} {y0:.3}\" \
         stroke=\"black\" fill=\"none\"/>"
    );
    for t in axis_ticks(frame.x_min, frame.x_max) {
        let px = frame.x(t);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.3}\" y1=\"{y0:.3}\" x2=\"{px:.3}\" y2=\"{:.3}\" stroke=\"black\"/>\
             <text x=\"{px:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{t:.3}</text>",
            y0 + 5.0,
            y0 + 20.0
        );
    }
    for t in axis_ticks(frame.y_min, frame.y_max) {
        let py = frame.y(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.3}\" y1=\"{py:.3}\" x2=\"{x0:.3}\" y2=\"{py:.3}\" stroke=\"black\"/>\
             <text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{t:.3}</text>",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{x_label}</text>",
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{:.3}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 15 {:.3})\">{y_label}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
}

fn render_line(csv: &Csv, y_column: Option<&str>, log_y: bool) -> Result<String, SvgError> {
    let y_col = match y_column {
        Some(name) => csv
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SvgError::MissingColumn(name.to_string()))?,
        None => 1,
    };
    let mut points = Vec::with_capacity(csv.rows.len());
    for r in 0..csv.rows.len() {
        let x = num(csv, r, 0)?;
        let mut y = num(csv, r, y_col)?;
        if log_y {
            if y <= 0.0 {
                return Err(SvgError::NonpositiveLog(y));
            }
            y = y.log10();
        }
        points.push((x, y));
    }
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame { x_min, x_max, y_min, y_max };

    let mut out = String::new();
    open_svg(&mut out);
    let y_label = if log_y {
        format!("log10 {}", csv.header.get(y_col).cloned().unwrap_or_default())
    } else {
        csv.header.get(y_col).cloned().unwrap_or_default()
    };
    draw_axes(&mut out, &frame, csv.header.first().map(String::as_str).unwrap_or(""), &y_label);
    let mut path = String::from("<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"");
    for (x, y) in &points {
        let _ = write!(path, "{:.3},{:.3} ", frame.x(*x), frame.y(*y));
    }
    path.push_str("\"/>");
    out.push_str(&path);
    out.push_str("\n</svg>\n");
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn render_constellation(csv: &Csv) -> Result<String, SvgError> {
    let mut labels: Vec<String> = Vec::new();
    let mut points = Vec::with_capacity(csv.rows.len());
    for r in 0..csv.rows.len() {
        let re = num(csv, r, 0)?;
        let im = num(csv, r, 1)?;
        let label = csv.rows[r].get(2).cloned().unwrap_or_default();
        if !labels.contains(&label) {
            labels.push(label.clone());
        }
        points.push((re, im, label));
    }
    // Symmetric square axes around the origin.
    let reach = points
        .iter()
        .map(|p| p.0.abs().max(p.1.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.1;
    let frame = Frame { x_min: -reach, x_max: reach, y_min: -reach, y_max: reach };

    let mut out = String::new();
    open_svg(&mut out);
    draw_axes(&mut out, &frame, "re", "im");
    for (re, im, label) in &points {
        let color = PALETTE[labels.iter().position(|l| l == label).unwrap() % PALETTE.len()];
        let _ = writeln!(
            out,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2\" fill=\"{color}\"/>",
            frame.x(*re),
            frame.y(*im)
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.3}\" y=\"{:.3}\" fill=\"{}\">{label}</text>",
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * i as f64,
            PALETTE[i % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn render_heatmap(csv: &Csv) -> Result<String, SvgError> {
    let mut xs: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut cells = Vec::with_capacity(csv.rows.len());
    for r in 0..csv.rows.len() {
        let x = num(csv, r, 0)?;
        let z = num(csv, r, 1)?;
        let m = num(csv, r, 2)?;
        if !xs.iter().any(|&v| v == x) {
            xs.push(x);
        }
        if !zs.iter().any(|&v| v == z) {
            zs.push(z);
        }
        cells.push((x, z, m));
    }
    xs.sort_by(f64::total_cmp);
    zs.sort_by(f64::total_cmp);
    let peak = cells.iter().map(|c| c.2).fold(0.0f64, f64::max).max(1e-300);
    let frame = Frame {
        x_min: xs[0],
        x_max: *xs.last().unwrap(),
        y_min: zs[0],
        y_max: *zs.last().unwrap(),
    };
    let cw = (WIDTH - 2.0 * MARGIN) / xs.len() as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / zs.len() as f64;

    let mut out = String::new();
    open_svg(&mut out);
    draw_axes(&mut out, &frame, "x", "z");
    for (x, z, m) in &cells {
        let shade = 255 - (m / peak * 230.0).round() as u8;
        let _ = writeln!(
            out,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{cw:.3}\" height=\"{ch:.3}\" \
             fill=\"rgb({shade},{shade},255)\"/>",
            frame.x(*x) - cw / 2.0,
            frame.y(*z) - ch / 2.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render(
    kind: ChartKind,
    csv_text: &str,
    y_column: Option<&str>,
    log_y: bool,
) -> Result<String, SvgError> {
    let csv = parse_csv(csv_text)?;
    match kind {
        ChartKind::Line => render_line(&csv, y_column, log_y),
        ChartKind::Constellation => render_constellation(&csv),
        ChartKind::Heatmap => render_heatmap(&csv),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csv_is_an_error() {
        assert!(matches!(render(ChartKind::Line, "a,b\n", None, false), Err(SvgError::Empty)));
    }

    #[test]
    fn line_chart_is_deterministic_and_column_addressable() {
        let csv = "angle_deg,gain_db\n-1.0,-3.5\n0.0,0.0\n1.0,-3.5\n";
        let a = render(ChartKind::Line, csv, None, false).unwrap();
        let b = render(ChartKind::Line, csv, Some("gain_db"), false).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(!a.contains("time"));
        assert!(matches!(
            render(ChartKind::Line, csv, Some("nope"), false),
            Err(SvgError::MissingColumn(_))
        ));
    }

    #[test]
    fn log_scale_rejects_nonpositive() {
        let csv = "iteration,r\n0,1.0\n1,0.0\n";
        assert!(matches!(
            render(ChartKind::Line, csv, Some("r"), true),
            Err(SvgError::NonpositiveLog(_))
        ));
    }

    #[test]
    fn constellation_axes_are_symmetric() {
        let csv = "re,im,label\n0.9,0.1,a\n-0.2,-0.8,b\n";
        let svg = render(ChartKind::Constellation, csv, None, false).unwrap();
        // Symmetric reach 0.9·1.1 = 0.99 shows up as both axis extremes.
        assert!(svg.contains(">-0.990<"), "{svg}");
        assert!(svg.contains(">0.990<"));
    }

    #[test]
    fn heatmap_renders_cells() {
        let csv = "x,z,magnitude\n0,1,2.0\n1,1,1.0\n0,2,0.0\n1,2,4.0\n";
        let svg = render(ChartKind::Heatmap, csv, None, false).unwrap();
        assert_eq!(svg.matches("<rect").count(), 5, "4 cells plus background");
        assert!(svg.contains("rgb(25,25,255)"), "peak cell is darkest: {svg}");
    }
}
