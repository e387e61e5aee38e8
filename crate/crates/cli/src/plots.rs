//! ROC and precision-recall curve grids as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use steward_core::cluster::xml_escape;
use steward_core::cohort::Antibiotic;
use steward_core::eval::{Curves, Metric, MetricReport};
use steward_core::{Error, Result};

pub const WIDTH: f64 = 480.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 64.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Roc,
    Pr,
}

impl CurveKind {
    fn metric(self) -> Metric {
        match self {
            CurveKind::Roc => Metric::RocAuc,
            CurveKind::Pr => Metric::PrcAuc,
        }
    }

    fn axes(self) -> (&'static str, &'static str) {
        match self {
            CurveKind::Roc => ("False positive rate", "True positive rate"),
            CurveKind::Pr => ("Recall", "Precision"),
        }
    }

    fn area_name(self) -> &'static str {
        match self {
            CurveKind::Roc => "AUROC",
            CurveKind::Pr => "AUPRC",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }
}

/// One representation's curve with its area and interval, if reported.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub area: Option<(f64, f64, f64)>,
}

/// Canvas position of a point in the unit square.
pub fn to_canvas(x: f64, y: f64) -> (f64, f64) {
    let w = WIDTH - LEFT - RIGHT;
    let h = HEIGHT - TOP - BOTTOM;
    (
        LEFT + x.clamp(0.0, 1.0) * w,
        TOP + (1.0 - y.clamp(0.0, 1.0)) * h,
    )
}

pub fn curve_svg(kind: CurveKind, title: &str, series: &[Series]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    let subtitle: Vec<String> = series
        .iter()
        .filter_map(|se| {
            se.area.map(|(p, lo, hi)| {
                format!(
                    "{} {} {p:.3} [{lo:.3}, {hi:.3}]",
                    se.label,
                    kind.area_name()
                )
            })
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<text x="{}" y="40" text-anchor="middle" font-size="10" fill="#444">{}</text>"##,
        WIDTH / 2.0,
        xml_escape(&subtitle.join("; "))
    );

    let (x0, y0) = to_canvas(0.0, 0.0);
    let (x1, y1) = to_canvas(1.0, 1.0);
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (tx, _) = to_canvas(t, 0.0);
        let (_, ty) = to_canvas(0.0, t);
        let _ = writeln!(
            s,
            r#"<line x1="{tx}" y1="{y0}" x2="{tx}" y2="{}" stroke="black"/><text x="{tx}" y="{}" text-anchor="middle" font-size="10">{t:.1}</text>"#,
            y0 + 4.0,
            y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ty}" x2="{x0}" y2="{ty}" stroke="black"/><text x="{}" y="{}" text-anchor="end" font-size="10">{t:.1}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            ty + 3.0
        );
    }
    let (xl, yl) = kind.axes();
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xl}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{yl}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if kind == CurveKind::Roc {
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#999" stroke-dasharray="4 4"/>"##
        );
    }

    for (i, se) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = se
            .points
            .iter()
            .map(|&(x, y)| {
                let (cx, cy) = to_canvas(x, y);
                format!("{cx:.2},{cy:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            xml_escape(&se.label),
            pts.join(" ")
        );
        // legend in the lower corner the curves usually leave empty
        let lx = if kind == CurveKind::Roc {
            x1 - 150.0
        } else {
            x0 + 10.0
        };
        let ly = y0 - 16.0 * (series.len() - i) as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            xml_escape(&se.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `roc_<antibiotic>.svg` and `pr_<antibiotic>.svg` for every
/// antibiotic with curves, one series per representation.
pub fn emit_plots(dir: &Path, curves: &[Curves], reports: &[MetricReport]) -> Result<Vec<PathBuf>> {
    let mut by_ab: BTreeMap<Antibiotic, Vec<&Curves>> = BTreeMap::new();
    for c in curves {
        by_ab.entry(c.antibiotic).or_default().push(c);
    }
    let mut written = Vec::new();
    if by_ab.is_empty() {
        return Ok(written);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (ab, mut list) in by_ab {
        list.sort_by(|a, b| a.representation.cmp(&b.representation));
        for kind in [CurveKind::Roc, CurveKind::Pr] {
            let series: Vec<Series> = list
                .iter()
                .map(|c| {
                    let pts = match kind {
                        CurveKind::Roc => &c.roc,
                        CurveKind::Pr => &c.pr,
                    };
                    let area = reports
                        .iter()
                        .find(|r| {
                            r.antibiotic == ab
                                && r.representation == c.representation
                                && r.metric == kind.metric()
                        })
                        .map(|r| (r.point, r.ci_low, r.ci_high));
                    Series {
                        label: c.representation.clone(),
                        points: pts.iter().map(|p| (p.x, p.y)).collect(),
                        area,
                    }
                })
                .collect();
            let title = format!("{} {}", ab.name(), kind.area_name());
            let path = dir.join(format!("{}_{}.svg", kind.prefix(), ab.slug()));
            std::fs::write(&path, curve_svg(kind, &title, &series))
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
