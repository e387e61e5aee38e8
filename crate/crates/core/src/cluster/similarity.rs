use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::embed::cosine;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_permutation(ordering: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in ordering {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Config(
                "ordering is not a permutation of the rows".into(),
            ));
        }
    }
    if ordering.len() != n {
        return Err(Error::Config(
            "ordering is not a permutation of the rows".into(),
        ));
    }
    Ok(())
}

/// Pairwise cosine similarities with rows and columns in `ordering`.
pub fn similarity_matrix<T: Scalar>(
    embeddings: ArrayView2<'_, T>,
    ordering: &[usize],
) -> Result<Array2<f64>> {
    check_permutation(ordering, embeddings.nrows())?;
    let m = ordering.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let u = embeddings.row(ordering[a]);
            (0..m)
                .map(|b| {
                    if a == b {
                        1.0
                    } else {
                        cosine(u, embeddings.row(ordering[b])).value
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((m, m));
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row.into_iter().enumerate() {
            out[[a, b]] = v;
        }
    }
    // symmetric by construction up to summation order; make it exact
    for a in 0..m {
        for b in a + 1..m {
            out[[b, a]] = out[[a, b]];
        }
    }
    Ok(out)
}

/// Mean off-diagonal similarity within blocks and between blocks, for
/// `labels` given in matrix order.
pub fn block_means(sim: &Array2<f64>, labels: &[usize]) -> (f64, f64) {
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for a in 0..labels.len() {
        for b in 0..labels.len() {
            if a == b {
                continue;
            }
            if labels[a] == labels[b] {
                within += sim[[a, b]];
                nw += 1;
            } else {
                between += sim[[a, b]];
                nb += 1;
            }
        }
    }
    (within / nw.max(1) as f64, between / nb.max(1) as f64)
}

pub fn similarity_csv(sim: &Array2<f64>, row_ids: &[String]) -> String {
    let mut out = String::from("id");
    for id in row_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (a, id) in row_ids.iter().enumerate() {
        out.push_str(id);
        for b in 0..row_ids.len() {
            let _ = write!(out, ",{:.6}", sim[[a, b]]);
        }
        out.push('\n');
    }
    out
}

fn color(v: f64) -> String {
    // white at -1 .. dark blue at 1
    let t = ((v + 1.0) / 2.0).clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - t)) as u8;
    let g = (255.0 * (1.0 - 0.8 * t)) as u8;
    let b = (255.0 - 90.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with lines at cluster boundaries. Matrices larger than
/// `max_cells` per side are block-averaged.
pub fn heatmap_svg(sim: &Array2<f64>, labels: &[usize], title: &str, max_cells: usize) -> String {
    let n = sim.nrows();
    let cells = n.min(max_cells.max(1));
    let size = 600.0;
    let margin = 40.0;
    let cell = size / cells.max(1) as f64;
    let block = |i: usize| (i * n / cells, ((i + 1) * n / cells).max(i * n / cells + 1));
    let mut svg = String::new();
    let total = size + 2.0 * margin;
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/><text x="{margin}" y="25" font-family="sans-serif" font-size="14">{}</text>"#,
        xml_escape(title)
    );
    for i in 0..cells {
        let (r0, r1) = block(i);
        for j in 0..cells {
            let (c0, c1) = block(j);
            let mut s = 0.0;
            for a in r0..r1 {
                for b in c0..c1 {
                    s += sim[[a, b]];
                }
            }
            let v = s / ((r1 - r0) * (c1 - c0)) as f64;
            let _ = write!(
                svg,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                margin + j as f64 * cell,
                margin + i as f64 * cell,
                cell + 0.01,
                cell + 0.01,
                color(v)
            );
        }
    }
    for b in 1..labels.len().min(n) {
        if labels[b] != labels[b - 1] {
            let p = margin + b as f64 / n as f64 * size;
            let end = margin + size;
            let _ = write!(
                svg,
                r##"<line x1="{p:.3}" y1="{margin}" x2="{p:.3}" y2="{end}" stroke="#c0392b" stroke-width="1"/><line x1="{margin}" y1="{p:.3}" x2="{end}" y2="{p:.3}" stroke="#c0392b" stroke-width="1"/>"##
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
