//! Machine-readable experiment reports and static plots.
//!
//! `report.json` depends only on the configuration and seed. Wall-clock data
//! goes to `run_info.json` so reports can be compared byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::models::Params;

pub const REPORT_FILE: &str = "report.json";
pub const RUN_INFO_FILE: &str = "run_info.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub operation: String,
    pub params: Params,
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
    pub metrics: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(model: &str, operation: &str, params: &Params, seed: u64) -> Self {
        Self {
            model: model.to_string(),
            operation: operation.to_string(),
            params: params.clone(),
            seed,
            tolerance: None,
            verdict: Verdict::Pass,
            metrics: BTreeMap::new(),
            warnings: vec![],
            artifacts: vec![],
        }
    }

    pub fn metric<V: Serialize>(&mut self, key: &str, value: V) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `report.json` and `run_info.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(REPORT_FILE), self.to_json()?)?;
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let info = serde_json::json!({
            "timestamp": secs,
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(dir.join(RUN_INFO_FILE), serde_json::to_string_pretty(&info)? + "\n")?;
        Ok(())
    }
}

/// Non-finite floats have no JSON form; they are stored as strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        Value::String(x.to_string())
    }
}

/// A 2-D scatter plot with an optional closed hull polygon and marked points.
#[derive(Debug, Clone, Default)]
pub struct ScatterPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub hull: Vec<(f64, f64)>,
    pub marks: Vec<(f64, f64)>,
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

impl ScatterPlot {
    pub fn to_svg(&self) -> String {
        let all = self.points.iter().chain(&self.hull).chain(&self.marks).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let pad = |lo: f64, hi: f64| {
            let w = (hi - lo).max(1e-9);
            (lo - 0.05 * w, hi + 0.05 * w)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let inner = SIZE - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * inner;
        let sy = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * inner;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, SIZE / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            SIZE / 2.0,
            SIZE - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            SIZE / 2.0,
            SIZE / 2.0,
            escape(&self.y_label)
        );
        for (v, anchor, x, y) in [(x0, "start", MARGIN, SIZE - MARGIN + 16.0), (x1, "end", SIZE - MARGIN, SIZE - MARGIN + 16.0)] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.3}</text>"#);
        }
        for (v, y) in [(y0, SIZE - MARGIN), (y1, MARGIN + 10.0)] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.3}</text>"#, MARGIN - 4.0);
        }
        let _ = writeln!(s, r##"<g fill="#3465a4" fill-opacity="0.35">"##);
        for &(x, y) in &self.points {
            if x.is_finite() && y.is_finite() {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, sx(x), sy(y));
            }
        }
        s.push_str("</g>\n");
        if !self.hull.is_empty() {
            let pts: Vec<String> = self.hull.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r##"<polygon points="{}" fill="none" stroke="#cc0000" stroke-width="1.5"/>"##, pts.join(" "));
        }
        for &(x, y) in &self.marks {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#000"/>"##, sx(x), sy(y));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Orders 2-D points counter-clockwise around their centroid.
pub fn ccw_order(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return vec![];
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut out = points.to_vec();
    out.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_is_stable() {
        let mut r = Report::new("sphere", "verify-convexity", &Params::new(), 7);
        r.metric("b", 2.5);
        r.metric("a", vec![1, 2]);
        r.artifacts.push("momentum.csv".into());
        let a = r.to_json().unwrap();
        assert_eq!(a, r.clone().to_json().unwrap());
        assert!(a.find("\"a\"").unwrap() < a.find("\"b\"").unwrap());
        let back: Report = serde_json::from_str(&a).unwrap();
        assert_eq!(back, r);
        assert!(a.contains("\"verdict\": \"pass\""));
    }

    #[test]
    fn report_write_separates_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::new("sphere", "even-index", &Params::new(), 1);
        r.write(dir.path()).unwrap();
        let report = fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        assert!(!report.contains("timestamp"));
        let info = fs::read_to_string(dir.path().join(RUN_INFO_FILE)).unwrap();
        assert!(info.contains("timestamp"));
    }

    #[test]
    fn svg_contains_every_layer() {
        let plot = ScatterPlot {
            title: "a < b".into(),
            points: vec![(0.0, 0.0), (1.0, 1.0), (f64::NAN, 0.0)],
            hull: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)],
            marks: vec![(1.0, 1.0)],
            ..Default::default()
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("r=\"1.5\"").count(), 2);
        assert!(svg.contains("<polygon") && svg.contains("a &lt; b"));
    }

    #[test]
    fn ccw_order_of_square() {
        let sq = ccw_order(&[(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]);
        assert_eq!(sq, vec![(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]);
    }

    #[test]
    fn non_finite_values_become_strings() {
        assert_eq!(json_f64(f64::INFINITY), Value::String("inf".into()));
        assert_eq!(json_f64(0.5), serde_json::json!(0.5));
    }
}
