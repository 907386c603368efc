//! SVG charts over sweep results: accuracy points and lines per axis value
//! with mean±std shading across seeds, log-scale x for corpus sizes. Output
//! bytes are deterministic for a given input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// (x, mean, std) per point, pre-sorted by x.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Scale {
    min: f64,
    max: f64,
    log: bool,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let (v, min, max) = if self.log {
            (v.log10(), self.min.log10(), self.max.log10())
        } else {
            (v, self.min, self.max)
        };
        let t = if max > min { (v - min) / (max - min) } else { 0.5 };
        self.lo_px + t * (self.hi_px - self.lo_px)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.min.log10().floor() as i32;
            let hi = self.max.log10().ceil() as i32;
            (lo..=hi).map(|e| 10f64.powi(e)).collect()
        } else {
            let n = 5;
            (0..=n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / n as f64)
                .collect()
        }
    }
}

/// Renders one chart with std bands; series colors cycle through a fixed
/// palette.
pub fn render_chart(spec: &ChartSpec, series: &[Series]) -> Result<String, HarnessError> {
    let all: Vec<&(f64, f64, f64)> = series.iter().flat_map(|s| &s.points).collect();
    if all.is_empty() {
        return Err(HarnessError::Invalid("nothing to plot".into()));
    }
    let xs: Vec<f64> = all.iter().map(|p| p.0).collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if spec.log_x && x_min <= 0.0 {
        return Err(HarnessError::Invalid("log x-axis needs positive values".into()));
    }
    let y_lo = all.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let y_hi = all.iter().map(|p| (p.1 + p.2).max(p.1)).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_hi - y_lo) * 0.08).max(0.02);
    let x = Scale {
        min: x_min,
        max: if x_max > x_min { x_max } else { x_min + 1.0 },
        log: spec.log_x,
        lo_px: MARGIN_L,
        hi_px: W - MARGIN_R,
    };
    let y = Scale {
        min: (y_lo - pad).max(-0.02),
        max: (y_hi + pad).min(1.05),
        log: false,
        lo_px: H - MARGIN_B,
        hi_px: MARGIN_T,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        esc(&spec.title)
    );

    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#dddddd" stroke-width="1"/>"##,
            W - MARGIN_R
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{t:.2}</text>"#,
            MARGIN_L - 6.0,
            py + 4.0
        );
    }
    for t in x.ticks() {
        let px = x.map(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.1}" y1="{MARGIN_T:.1}" x2="{px:.1}" y2="{:.1}" stroke="#eeeeee" stroke-width="1"/>"##,
            H - MARGIN_B
        );
        let label = if spec.log_x || t.abs() >= 1000.0 {
            format!("{:.0e}", t)
        } else {
            format!("{t:.1}")
        };
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>"#,
            H - MARGIN_B + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="1"/>"#,
        H - MARGIN_B,
        W - MARGIN_R,
        H - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L:.1}" y1="{MARGIN_T:.1}" x2="{MARGIN_L:.1}" y2="{:.1}" stroke="black" stroke-width="1"/>"#,
        H - MARGIN_B
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (MARGIN_L + W - MARGIN_R) / 2.0,
        H - 12.0,
        esc(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (MARGIN_T + H - MARGIN_B) / 2.0,
        (MARGIN_T + H - MARGIN_B) / 2.0,
        esc(&spec.y_label)
    );

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        if s.points.is_empty() {
            continue;
        }
        // Shaded mean±std band.
        if s.points.iter().any(|p| p.2 > 0.0) && s.points.len() > 1 {
            let mut band = String::from("<polygon points=\"");
            for (px, m, sd) in &s.points {
                let _ = write!(band, "{:.1},{:.1} ", x.map(*px), y.map(m + sd));
            }
            for (px, m, sd) in s.points.iter().rev() {
                let _ = write!(band, "{:.1},{:.1} ", x.map(*px), y.map(m - sd));
            }
            let _ = writeln!(svg, "{band}\" fill=\"{color}\" opacity=\"0.15\"/>");
        }
        if s.points.len() > 1 {
            let mut line = String::from("<polyline points=\"");
            for (px, m, _) in &s.points {
                let _ = write!(line, "{:.1},{:.1} ", x.map(*px), y.map(*m));
            }
            let _ = writeln!(svg, "{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>");
        }
        for (px, m, _) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3.2" fill="{color}"/>"#,
                x.map(*px),
                y.map(*m)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - MARGIN_R - 150.0,
            MARGIN_T + 14.0 * (si as f64 + 1.0),
            esc(&s.label)
        );
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Builds the report from a sweep CSV: the across-seed summary rows (seed
/// column "mean", gen split) become one series per task.
pub fn render_report(csv_path: &Path, out_path: &Path) -> Result<(), HarnessError> {
    let raw = fs::read_to_string(csv_path)?;
    let mut lines = raw.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| HarnessError::Invalid("empty CSV".into()))?
        .split(',')
        .collect();
    let col = |name: &str| -> Result<usize, HarnessError> {
        header
            .iter()
            .position(|&h| h == name)
            .ok_or_else(|| HarnessError::Invalid(format!("CSV lacks column '{name}'")))
    };
    let (c_axis, c_value, c_task, c_params, c_words, c_seed, c_split, c_acc, c_std) = (
        col("axis")?,
        col("value")?,
        col("task")?,
        col("params")?,
        col("pretrain_words")?,
        col("seed")?,
        col("split")?,
        col("targeted_acc")?,
        col("targeted_std")?,
    );

    let mut axis = String::new();
    let mut by_task: std::collections::BTreeMap<String, Vec<(f64, f64, f64)>> =
        std::collections::BTreeMap::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < header.len() || fields[c_seed] != "mean" || fields[c_split] != "gen" {
            continue;
        }
        axis = fields[c_axis].to_string();
        let x = match fields[c_axis] {
            "corpus_size" => fields[c_words].parse().unwrap_or(f64::NAN),
            "register" => (by_task.get(fields[c_task]).map_or(0, Vec::len) + 1) as f64,
            _ => fields[c_value]
                .parse()
                .unwrap_or_else(|_| fields[c_params].parse().unwrap_or(f64::NAN)),
        };
        let mean: f64 = fields[c_acc].parse().unwrap_or(f64::NAN);
        let std: f64 = fields[c_std].parse().unwrap_or(0.0);
        if x.is_finite() && mean.is_finite() {
            by_task.entry(fields[c_task].to_string()).or_default().push((x, mean, std));
        }
    }
    if by_task.is_empty() {
        return Err(HarnessError::Invalid("no summary rows to plot".into()));
    }
    let series: Vec<Series> = by_task
        .into_iter()
        .map(|(task, mut points)| {
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
            Series {
                label: format!("{task} (gen)"),
                points,
            }
        })
        .collect();
    let spec = ChartSpec {
        title: format!("generalization accuracy vs {axis}"),
        x_label: axis.clone(),
        y_label: "targeted accuracy (checkpoint mean)".into(),
        log_x: axis == "corpus_size",
    };
    let svg = render_chart(&spec, &series)?;
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out_path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ChartSpec {
        ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
        }
    }

    #[test]
    fn renders_single_point_and_band() {
        let one = render_chart(
            &spec(),
            &[Series {
                label: "s".into(),
                points: vec![(1.0, 0.5, 0.1)],
            }],
        )
        .unwrap();
        assert!(one.contains("<circle"));
        assert!(!one.contains("<polyline"), "single point draws no line");

        let band = render_chart(
            &spec(),
            &[Series {
                label: "s".into(),
                points: vec![(1.0, 0.4, 0.1), (2.0, 0.6, 0.2)],
            }],
        )
        .unwrap();
        assert!(band.contains("<polygon"));
        assert!(band.contains("<polyline"));
    }

    #[test]
    fn output_bytes_are_deterministic() {
        let series = vec![Series {
            label: "a".into(),
            points: vec![(1.0, 0.3, 0.05), (10.0, 0.8, 0.02)],
        }];
        let a = render_chart(&spec(), &series).unwrap();
        let b = render_chart(&spec(), &series).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_chart(&spec(), &[]).is_err());
        let log = ChartSpec {
            log_x: true,
            ..spec()
        };
        assert!(render_chart(
            &log,
            &[Series {
                label: "s".into(),
                points: vec![(0.0, 0.5, 0.0)],
            }]
        )
        .is_err());
    }

    #[test]
    fn report_reads_sweep_summary_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("sweep.csv");
        let svg = dir.path().join("out.svg");
        fs::write(
            &csv,
            "axis,value,task,params,pretrain_corpus,pretrain_words,seed,split,seq_acc,seq_std,targeted_acc,targeted_std\n\
             nl,1,quest,1000,none,0,1,gen,0.100000,,0.200000,\n\
             nl,1,quest,1000,none,0,mean,gen,0.100000,0.010000,0.200000,0.020000\n\
             nl,2,quest,2000,none,0,mean,gen,0.300000,0.010000,0.500000,0.050000\n\
             nl,2,quest,2000,none,0,mean,test,0.900000,0.010000,0.950000,0.010000\n",
        )
        .unwrap();
        render_report(&csv, &svg).unwrap();
        let rendered = fs::read_to_string(&svg).unwrap();
        assert!(rendered.contains("quest (gen)"));
        assert!(rendered.contains("<polyline"));
    }
}
