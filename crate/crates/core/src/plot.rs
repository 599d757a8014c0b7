//! Minimal SVG line charts from numeric CSV, so studies can emit figures
//! without a plotting dependency.

use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, PlotError>;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads a CSV with a header row: the first numeric column is the x axis,
/// every later numeric column becomes one series. Non-numeric cells make a
/// row drop out of the affected series only.
pub fn series_from_csv<R: BufRead>(r: R) -> Result<Vec<Series>> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(PlotError::Empty("empty csv".into())),
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(PlotError::Parse {
            line: 1,
            msg: "need at least two columns".into(),
        });
    }
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(PlotError::Parse {
                line: i + 1,
                msg: format!("expected {} fields, got {}", names.len(), fields.len()),
            });
        }
        rows.push(fields.iter().map(|f| f.trim().parse::<f64>().ok()).collect());
    }
    // First column that is numeric in every row becomes x.
    let ncol = names.len();
    let x_col = (0..ncol)
        .find(|&c| !rows.is_empty() && rows.iter().all(|r| r[c].is_some()))
        .ok_or_else(|| PlotError::Empty("no fully numeric column for the x axis".into()))?;
    let mut series = Vec::new();
    for c in 0..ncol {
        if c == x_col {
            continue;
        }
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| match (r[x_col], r[c]) {
                (Some(x), Some(y)) => Some((x, y)),
                _ => None,
            })
            .collect();
        if !points.is_empty() {
            series.push(Series {
                name: names[c].clone(),
                points,
            });
        }
    }
    if series.is_empty() {
        return Err(PlotError::Empty("no numeric series".into()));
    }
    Ok(series)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders the series as an SVG line chart with linear axes and a legend.
pub fn line_chart(title: &str, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty("nothing to plot".into()));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    // Axes with 5 ticks each.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            px(xv),
            HEIGHT - MARGIN + 18.0,
            tick(xv)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 6.0,
            py(yv) + 4.0,
            tick(yv)
        ));
        if i > 0 {
            svg.push_str(&format!(
                "<line x1=\"{m}\" y1=\"{y:.1}\" x2=\"{r}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
                m = MARGIN,
                r = WIDTH - MARGIN,
                y = py(yv)
            ));
        }
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = MARGIN + 16.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            WIDTH - MARGIN - 120.0 + 24.0,
            WIDTH - MARGIN - 120.0 + 30.0,
            ly + 4.0,
            escape(&s.name),
            x = WIDTH - MARGIN - 120.0,
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_to_chart_round() {
        let csv = "t,gap,l1\n0.4,0.1,1.0\n0.2,0.05,0.5\n0.1,0.02,0.25\n";
        let series = series_from_csv(csv.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].name, "gap");
        assert_eq!(series[0].points.len(), 3);
        let svg = line_chart("convergence", &series).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("convergence"));
    }

    #[test]
    fn non_numeric_cells_drop_rows_not_files() {
        let csv = "id,x,y\nrun,1.0,2.0\nrun,2.0,oops\nrun,3.0,4.0\n";
        let series = series_from_csv(csv.as_bytes()).unwrap();
        // "id" never parses, x becomes the axis, y keeps two points.
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].points, vec![(1.0, 2.0), (3.0, 4.0)]);
    }

    #[test]
    fn bad_csv_is_an_error_with_line() {
        let csv = "x,y\n1.0,2.0\n1.0\n";
        match series_from_csv(csv.as_bytes()) {
            Err(PlotError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(series_from_csv("x\n1.0\n".as_bytes()).is_err());
    }
}
