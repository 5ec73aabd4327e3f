//! Rank tables, significance plots and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::GenderClass;
use crate::error::{Error, Result};
use crate::lvm::DeviationRanking;
use crate::pmi::csv_field;
use crate::util::write_atomic;

/// CSV with a `rank` column followed by a lemma and a τ column per ranking.
/// Rows run from 1 to `k`; cells past the end of a ranking are empty.
pub fn emit_rank_table(rankings: &[DeviationRanking], k: usize) -> String {
    let mut out = String::from("rank");
    for r in rankings {
        let label = format!("{}_{}", r.gender.as_str(), r.sentiment.as_str().to_lowercase());
        let _ = write!(out, ",{label}_lemma,{label}_tau");
    }
    out.push('\n');
    if rankings.is_empty() {
        return out;
    }
    for row in 0..k {
        let _ = write!(out, "{}", row + 1);
        for r in rankings {
            match r.items.get(row) {
                Some((lemma, tau)) => {
                    let _ = write!(out, ",{},{:?}", csv_field(lemma), tau);
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub language: String,
    pub model: String,
    pub gender: GenderClass,
    pub frequency: f64,
    pub significant: bool,
}

const PANEL_W: f64 = 240.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;

fn gender_color(g: GenderClass) -> &'static str {
    match g {
        GenderClass::Male => "#1f77b4",
        GenderClass::Female => "#d62728",
        GenderClass::Other => "#7f7f7f",
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG document with one panel per language and one column per model.
/// Significant points are drawn as an `x`, the rest as circles.
pub fn render_sentiment_plot(points: &[PlotPoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::invalid("no points to plot"));
    }
    if let Some(p) = points.iter().find(|p| !p.frequency.is_finite()) {
        return Err(Error::invalid(format!("non-finite frequency for {}/{}", p.language, p.model)));
    }
    let mut panels: BTreeMap<&str, Vec<&PlotPoint>> = BTreeMap::new();
    for p in points {
        panels.entry(p.language.as_str()).or_default().push(p);
    }
    let width = MARGIN + panels.len() as f64 * (PANEL_W + MARGIN);
    let height = PANEL_H + 3.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    for (i, (language, pts)) in panels.iter().enumerate() {
        let x0 = MARGIN + i as f64 * (PANEL_W + MARGIN);
        let y0 = 2.0 * MARGIN;
        let mut models: Vec<&str> = pts.iter().map(|p| p.model.as_str()).collect();
        models.sort_unstable();
        models.dedup();
        let _ = writeln!(svg, r#"<g class="panel" data-language="{}">"#, xml_escape(language));
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 6.0,
            xml_escape(language)
        );
        for tick in [0.0, 0.5, 1.0] {
            let y = y0 + PANEL_H * (1.0 - tick);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="9">{tick:.1}</text>"#,
                x0 - 4.0,
                y + 3.0
            );
        }
        let step = PANEL_W / models.len() as f64;
        for (j, model) in models.iter().enumerate() {
            let cx = x0 + step * (j as f64 + 0.5);
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="9">{}</text>"#,
                y0 + PANEL_H + 14.0,
                xml_escape(model)
            );
        }
        let mut ordered: Vec<&&PlotPoint> = pts.iter().collect();
        ordered.sort_by(|a, b| {
            a.model
                .cmp(&b.model)
                .then(a.gender.cmp(&b.gender))
                .then(a.frequency.total_cmp(&b.frequency))
        });
        for p in ordered {
            let j = models.binary_search(&p.model.as_str()).expect("model listed");
            let offset = match p.gender {
                GenderClass::Male => -6.0,
                GenderClass::Female => 6.0,
                GenderClass::Other => 0.0,
            };
            let cx = x0 + step * (j as f64 + 0.5) + offset;
            let cy = y0 + PANEL_H * (1.0 - p.frequency.clamp(0.0, 1.0));
            let color = gender_color(p.gender);
            if p.significant {
                let _ = writeln!(
                    svg,
                    r#"<path class="x-marker" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="2"/>"#,
                    cx - 4.0,
                    cy - 4.0,
                    cx + 4.0,
                    cy + 4.0,
                    cx - 4.0,
                    cy + 4.0,
                    cx + 4.0,
                    cy - 4.0
                );
            } else {
                let _ = writeln!(
                    svg,
                    r#"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="3.5" fill="{color}"/>"#
                );
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_sentiment_plot(points: &[PlotPoint], title: &str, path: &Path) -> Result<()> {
    let svg = render_sentiment_plot(points, title)?;
    write_atomic(path, svg.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Everything needed to repeat a run: the full configuration, its digest,
/// and digests of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Resolved input path → sha256.
    pub input_digests: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub grid: GridSpec,
    pub started_at: String,
    pub finished_at: String,
    /// Output path relative to the output directory → sha256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    write_atomic(path, manifest.to_json()?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexfusion::SentimentClass;

    fn ranking(g: GenderClass, s: SentimentClass, n: usize) -> DeviationRanking {
        DeviationRanking {
            gender: g,
            sentiment: s,
            items: (0..n).map(|i| (format!("w{i}"), 1.0 + 1.0 / (i as f64 + 1.0))).collect(),
        }
    }

    #[test]
    fn ten_by_twelve() {
        let mut rs = Vec::new();
        for g in [GenderClass::Male, GenderClass::Female] {
            for s in SentimentClass::ALL {
                rs.push(ranking(g, s, 25));
            }
        }
        let csv = emit_rank_table(&rs, 10);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines[0].starts_with("rank,male_pos_lemma,male_pos_tau"));
        for row in &lines[1..] {
            assert_eq!(row.split(',').count(), 13);
        }
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[1], "w0");
        assert_eq!(first[2].parse::<f64>().unwrap(), rs[0].items[0].1);
    }

    #[test]
    fn header_only_when_empty() {
        assert_eq!(emit_rank_table(&[], 10), "rank\n");
    }

    #[test]
    fn short_rankings_leave_blank_cells() {
        let csv = emit_rank_table(&[ranking(GenderClass::Male, SentimentClass::Neg, 1)], 2);
        assert_eq!(csv.lines().nth(2), Some("2,,"));
    }

    fn point(lang: &str, model: &str, g: GenderClass, sig: bool) -> PlotPoint {
        PlotPoint {
            language: lang.into(),
            model: model.into(),
            gender: g,
            frequency: 0.4,
            significant: sig,
        }
    }

    #[test]
    fn one_x_glyph() {
        let svg = render_sentiment_plot(
            &[point("en", "m", GenderClass::Male, true), point("en", "m", GenderClass::Female, false)],
            "t",
        )
        .unwrap();
        assert_eq!(svg.matches("class=\"x-marker\"").count(), 1);
        assert_eq!(svg.matches("class=\"marker\"").count(), 1);
    }

    #[test]
    fn panel_per_language() {
        let langs = ["ar", "de", "en", "es", "fr", "hi", "zh"];
        let pts: Vec<PlotPoint> = langs
            .iter()
            .map(|l| point(l, "m", GenderClass::Female, false))
            .collect();
        let svg = render_sentiment_plot(&pts, "t").unwrap();
        assert_eq!(svg.matches("class=\"panel\"").count(), 7);
    }

    #[test]
    fn plot_is_deterministic_and_rejects_empty() {
        let pts = vec![point("en", "a", GenderClass::Male, true), point("fr", "b", GenderClass::Female, false)];
        assert_eq!(render_sentiment_plot(&pts, "t").unwrap(), render_sentiment_plot(&pts, "t").unwrap());
        assert!(render_sentiment_plot(&[], "t").is_err());
    }
}
