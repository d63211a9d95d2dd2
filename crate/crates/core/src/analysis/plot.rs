//! Standalone SVG 1.1 heatmaps and rank scatter plots.

use std::fmt::Write;

use super::{RankComparison, Ranking};
use crate::sensitivity::SensitivityMatrix;

const CELL_W: f64 = 12.0;
const CELL_H: f64 = 6.0;
const MARGIN: f64 = 40.0;

fn open_svg(width: f64, height: f64, provenance: Option<&str>) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    if let Some(p) = provenance {
        // "--" is not allowed inside XML comments
        let _ = writeln!(s, "<!-- {} -->", p.replace("--", "- -"));
    }
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Diverging blue-white-red colour for `v` in `[-1, 1]`.
fn colour(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t)).round() as u8;
    let (r, g, b) = if v >= 0.0 {
        (255, fade(v), fade(v))
    } else {
        (fade(-v), fade(-v), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with one `rect.cell` per matrix entry. Rows follow `ranking` when
/// given, otherwise hybrid index order.
pub fn heatmap_svg(matrix: &SensitivityMatrix, ranking: Option<&Ranking>, provenance: Option<&str>) -> String {
    let order: Vec<usize> = match ranking {
        Some(r) => r.order.clone(),
        None => (0..matrix.n_rows()).collect(),
    };
    let scale = matrix.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let width = 2.0 * MARGIN + CELL_W * matrix.n_cols as f64;
    let height = 2.0 * MARGIN + CELL_H * order.len() as f64;
    let mut s = open_svg(width, height, provenance);
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{} ({} filter, max |value| {:.3e})</text>",
        MARGIN / 2.0,
        matrix.kind.name(),
        matrix.filter.name(),
        scale
    );
    for (r, &i) in order.iter().enumerate() {
        for t in 0..matrix.n_cols {
            let v = if scale > 0.0 { matrix.get(i, t) / scale } else { 0.0 };
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{:.1}\" y=\"{:.1}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{}\"><title>{} c{t}</title></rect>",
                MARGIN + CELL_W * t as f64,
                MARGIN + CELL_H * r as f64,
                colour(v),
                escape(&matrix.hybrid_ids[i])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of rank positions in two rankings; identical rankings put every
/// marker on the diagonal.
pub fn scatter_svg(cmp: &RankComparison, label_a: &str, label_b: &str, provenance: Option<&str>) -> String {
    let size = 400.0;
    let n = cmp.hybrid_ids.len().max(2) as f64;
    let to_px = |pos: usize| MARGIN + size * pos as f64 / (n - 1.0);
    let mut s = open_svg(size + 2.0 * MARGIN, size + 2.0 * MARGIN, provenance);
    let _ = writeln!(
        s,
        "<line class=\"diagonal\" x1=\"{MARGIN}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{MARGIN}\" stroke=\"grey\"/>",
        MARGIN + size,
        MARGIN + size
    );
    for i in 0..cmp.hybrid_ids.len() {
        let x = to_px(cmp.position_a[i]);
        let y = MARGIN + size - (to_px(cmp.position_b[i]) - MARGIN);
        let _ = writeln!(
            s,
            "<circle class=\"marker\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"black\"><title>{}</title></circle>",
            escape(&cmp.hybrid_ids[i])
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{} rank vs {} rank, Spearman {:.4}</text>",
        MARGIN / 2.0,
        escape(label_a),
        escape(label_b),
        cmp.spearman
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{compare_rankings, rank_hybrids, Norm};
    use crate::sensitivity::{ColumnSemantics, EnvFilter, MatrixKind};

    fn m3x18() -> SensitivityMatrix {
        SensitivityMatrix::new(
            MatrixKind::CHeat,
            EnvFilter::All,
            ColumnSemantics::GrowthPeriod,
            vec!["A".into(), "B".into(), "C".into()],
            18,
            (0..54).map(|i| (i as f64 - 20.0) / 7.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn heatmap_cell_count_and_determinism() {
        let m = m3x18();
        let r = rank_hybrids(&m, Norm::L2);
        let a = heatmap_svg(&m, Some(&r), Some("seed=1"));
        assert_eq!(a.matches("<rect class=\"cell\"").count(), 54);
        assert_eq!(a, heatmap_svg(&m, Some(&r), Some("seed=1")));
    }

    #[test]
    fn identical_rankings_on_diagonal() {
        let m = m3x18();
        let r = rank_hybrids(&m, Norm::L2);
        let cmp = compare_rankings(&r, &r).unwrap();
        let svg = scatter_svg(&cmp, "a", "b", None);
        for line in svg.lines().filter(|l| l.contains("class=\"marker\"")) {
            let grab = |key: &str| -> f64 {
                let start = line.find(key).unwrap() + key.len();
                line[start..].split('"').next().unwrap().parse().unwrap()
            };
            let (x, y) = (grab("cx=\""), grab("cy=\""));
            assert!(((x - MARGIN) - (MARGIN + 400.0 - y)).abs() < 1e-9);
        }
    }

    #[test]
    fn colour_endpoints() {
        assert_eq!(colour(0.0), "#ffffff");
        assert_eq!(colour(1.0), "#ff0000");
        assert_eq!(colour(-1.0), "#0000ff");
    }
}
