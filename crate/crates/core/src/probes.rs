//! Bias probes: slot-replacement grids, character postfixes and year
//! sweeps, over any [`TextScorer`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{paired_t_test, pearson, PairedTTest};
use crate::scoring::TextScorer;

pub const SLOT: &str = "{X}";
pub const YEAR_SLOT: &str = "{year}";

/// One grid row: a query and a document template with a single `{X}` slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub query: String,
    pub template: String,
    #[serde(default)]
    pub original_value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplacementGrid {
    pub rows: Vec<GridRow>,
    pub columns: Vec<String>,
    /// `scores[row][column]`.
    pub scores: Vec<Vec<f64>>,
    /// Column holding each row's original value, when listed.
    pub original_index: Vec<Option<usize>>,
}

impl ReplacementGrid {
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.columns.len())
            .map(|j| self.scores.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    /// Tab-separated matrix with a trailing row of column means.
    pub fn write_tsv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "row\toriginal")?;
        for c in &self.columns {
            write!(w, "\t{}", tsv_field(c))?;
        }
        writeln!(w)?;
        for (i, (row, scores)) in self.rows.iter().zip(&self.scores).enumerate() {
            write!(w, "{}\t{}", i + 1, tsv_field(row.original_value.as_deref().unwrap_or("")))?;
            for s in scores {
                write!(w, "\t{s}")?;
            }
            writeln!(w)?;
        }
        write!(w, "mean\t")?;
        for m in self.column_means() {
            write!(w, "\t{m}")?;
        }
        writeln!(w)?;
        Ok(())
    }
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

/// Substitutes the single occurrence of `slot` in `template`.
pub fn fill_slot(template: &str, slot: &str, value: &str) -> Result<String> {
    match template.matches(slot).count() {
        1 => Ok(template.replacen(slot, value, 1)),
        n => Err(Error::invalid(format!("template must contain `{slot}` exactly once, found {n}"))),
    }
}

/// Scores every row's template with each column value in its slot.
pub fn run_replacement_grid<S: TextScorer + ?Sized>(scorer: &S, rows: &[GridRow], columns: &[String]) -> Result<ReplacementGrid> {
    for (i, row) in rows.iter().enumerate() {
        fill_slot(&row.template, SLOT, "").map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
    }
    let scores = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            columns
                .iter()
                .map(|value| {
                    let doc = row.template.replacen(SLOT, value, 1);
                    scorer.score_text(&row.query, &doc).map_err(|e| Error::Row {
                        row: i + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let original_index = rows
        .iter()
        .map(|r| r.original_value.as_ref().and_then(|v| columns.iter().position(|c| c == v)))
        .collect();
    Ok(ReplacementGrid {
        rows: rows.to_vec(),
        columns: columns.to_vec(),
        scores,
        original_index,
    })
}

/// Pearson correlation between the grid's column means and a reference
/// score per column.
pub fn grid_bias_correlation(grid: &ReplacementGrid, reference: &BTreeMap<String, f64>) -> Result<f64> {
    if grid.columns.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 columns, grid has {}",
            grid.columns.len()
        )));
    }
    let refs = grid
        .columns
        .iter()
        .map(|c| {
            reference
                .get(c)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no reference score for column `{c}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    pearson(&grid.column_means(), &refs).ok_or_else(|| Error::invalid("column means or reference scores are constant"))
}

/// Appends `suffix` to every occurrence of `word` as a whole
/// alphanumeric token, compared case-insensitively. Returns the new text and
/// the number of occurrences changed.
pub fn append_to_word(text: &str, word: &str, suffix: &str) -> (String, usize) {
    let target = word.to_lowercase();
    let mut out = String::with_capacity(text.len() + suffix.len());
    let mut count = 0;
    let mut token_start = None;
    let mut finish = |out: &mut String, token: &str| {
        out.push_str(token);
        if !target.is_empty() && token.to_lowercase() == target {
            out.push_str(suffix);
            count += 1;
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            token_start.get_or_insert(i);
        } else {
            if let Some(start) = token_start.take() {
                finish(&mut out, &text[start..i]);
            }
            out.push(c);
        }
    }
    if let Some(start) = token_start {
        finish(&mut out, &text[start..]);
    }
    (out, count)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostfixRow {
    pub query: String,
    pub doc: String,
    pub common_term: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostfixCharStats {
    pub ch: char,
    pub mean_delta: f64,
    pub std: f64,
    pub n: usize,
    /// Paired test of this character's deltas against the mean delta of the
    /// other characters on the same row.
    pub test: Option<PairedTTest>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PostfixReport {
    pub chars: Vec<PostfixCharStats>,
    /// `deltas[char][row]`.
    pub deltas: Vec<Vec<f64>>,
}

impl PostfixReport {
    pub fn write_tsv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "char\tmean_delta\tstd\tn\tt\tp_value")?;
        for c in &self.chars {
            let (t, p) = c.test.map_or((f64::NAN, f64::NAN), |t| (t.t, t.p_value));
            writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}", c.ch, c.mean_delta, c.std, c.n, t, p)?;
        }
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Score change from appending each character to every occurrence of the
/// row's common term in the document.
pub fn run_postfix_probe<S: TextScorer + ?Sized>(scorer: &S, rows: &[PostfixRow], chars: &[char]) -> Result<PostfixReport> {
    if chars.is_empty() {
        return Ok(PostfixReport::default());
    }
    let per_row: Vec<Vec<f64>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let row_err = |message: String| Error::Row { row: i + 1, message };
            let (_, found) = append_to_word(&row.doc, &row.common_term, "");
            if found == 0 {
                return Err(row_err(format!("`{}` does not occur in the document", row.common_term)));
            }
            let base = scorer.score_text(&row.query, &row.doc).map_err(|e| row_err(e.to_string()))?;
            chars
                .iter()
                .map(|c| {
                    let (doc, _) = append_to_word(&row.doc, &row.common_term, c.encode_utf8(&mut [0; 4]));
                    Ok(scorer.score_text(&row.query, &doc).map_err(|e| row_err(e.to_string()))? - base)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let deltas: Vec<Vec<f64>> = (0..chars.len()).map(|j| per_row.iter().map(|r| r[j]).collect()).collect();
    let stats = chars
        .iter()
        .enumerate()
        .map(|(j, &ch)| {
            let (mean_delta, std) = mean_std(&deltas[j]);
            let test = if chars.len() > 1 && rows.len() > 1 {
                let others: Vec<f64> = per_row
                    .iter()
                    .map(|r| (r.iter().sum::<f64>() - r[j]) / (chars.len() - 1) as f64)
                    .collect();
                paired_t_test(&deltas[j], &others).ok()
            } else {
                None
            };
            PostfixCharStats {
                ch,
                mean_delta,
                std,
                n: rows.len(),
                test,
            }
        })
        .collect();
    Ok(PostfixReport { chars: stats, deltas })
}

/// Score for each year substituted into every `{year}` slot, in ascending
/// year order.
pub fn run_year_sweep<S: TextScorer + ?Sized>(scorer: &S, query: &str, template: &str, years: RangeInclusive<i32>) -> Result<Vec<(i32, f64)>> {
    if !template.contains(YEAR_SLOT) {
        return Err(Error::invalid(format!("template must contain `{YEAR_SLOT}`")));
    }
    let years: Vec<i32> = years.collect();
    years
        .par_iter()
        .map(|&y| Ok((y, scorer.score_text(query, &template.replace(YEAR_SLOT, &y.to_string()))?)))
        .collect()
}

pub fn write_year_tsv<W: Write>(w: &mut W, points: &[(i32, f64)]) -> Result<()> {
    writeln!(w, "year\tscore")?;
    for (y, s) in points {
        writeln!(w, "{y}\t{s}")?;
    }
    Ok(())
}

pub fn read_jsonl_rows<T: serde::de::DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Line,
    Bar,
}

/// A self-contained SVG chart of labelled values.
pub fn svg_chart(kind: ChartKind, title: &str, labels: &[String], values: &[f64]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut lo = finite.iter().copied().fold(0.0f64, f64::min);
    let mut hi = finite.iter().copied().fold(0.0f64, f64::max);
    if hi - lo < 1e-12 {
        hi += 1.0;
        lo -= 1.0;
    }
    let n = values.len().max(1) as f64;
    let step = (W - 2.0 * PAD) / n;
    let y_of = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let x_of = |i: usize| PAD + step * (i as f64 + 0.5);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#, W / 2.0, xml_escape(title));
    let zero = y_of(0.0);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray"/>"#, W - PAD);
    let _ = writeln!(s, r#"<text x="4" y="{:.2}" font-size="10">{hi:.4}</text>"#, PAD);
    let _ = writeln!(s, r#"<text x="4" y="{:.2}" font-size="10">{lo:.4}</text>"#, H - PAD);
    match kind {
        ChartKind::Bar => {
            for (i, v) in values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
                let (y0, y1) = (zero.min(y_of(*v)), zero.max(y_of(*v)));
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
                    x_of(i) - step * 0.4,
                    step * 0.8,
                    y1 - y0
                );
            }
        }
        ChartKind::Line => {
            let pts: Vec<String> = values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| format!("{:.2},{:.2}", x_of(i), y_of(*v)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
    }
    let every = (labels.len() / 30).max(1);
    for (i, l) in labels.iter().enumerate().filter(|(i, _)| i % every == 0) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            x_of(i),
            H - PAD + 14.0,
            xml_escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::AnalyzerConfig;
    use crate::index::{build_index, CorpusIndex, Document};
    use crate::scoring::{Bm25Params, LexicalScorer};
    use crate::thesaurus::{Thesaurus, EXAMPLE_THESAURUS_TSV};

    struct Constant;
    impl TextScorer for Constant {
        fn score_text(&self, _: &str, _: &str) -> Result<f64> {
            Ok(1.5)
        }
    }

    fn corpus(cfg: AnalyzerConfig) -> CorpusIndex {
        let docs = [
            ("1", "the ford and honda dealers"),
            ("2", "a car review for new drivers"),
            ("3", "cud chewing cattle facts"),
            ("4", "north carolina join ifta in 2010"),
            ("5", "when the vehicle arrived in 2015"),
            ("6", "gpu programming with cuda"),
        ];
        build_index(docs.iter().map(|(i, t)| Document::new(*i, *t)), cfg).unwrap()
    }

    fn cols(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn slot_filling() {
        assert_eq!(fill_slot("a {X} b", SLOT, "ford").unwrap(), "a ford b");
        assert!(fill_slot("a b", SLOT, "x").is_err());
        assert!(fill_slot("{X} {X}", SLOT, "x").is_err());
    }

    #[test]
    fn grid_examples() {
        let index = corpus(AnalyzerConfig::default());
        let th = Thesaurus::parse_str(EXAMPLE_THESAURUS_TSV).unwrap();
        let rows = vec![
            GridRow {
                query: "car dealers".into(),
                template: "the {X} dealers were open".into(),
                original_value: Some("ford".into()),
            },
            GridRow {
                query: "best car".into(),
                template: "we drove a {X} today".into(),
                original_value: None,
            },
        ];
        let columns = cols(&["ford", "honda", "toyota"]);
        let bm25 = LexicalScorer::bm25(&index, Bm25Params::default()).unwrap();
        let g = run_replacement_grid(&bm25, &rows, &columns).unwrap();
        for r in &g.scores {
            assert!(r.iter().all(|s| *s == r[0]));
        }
        assert_eq!(g.original_index, vec![Some(0), None]);

        let bm25t = LexicalScorer::bm25t(&index, Bm25Params::default(), &th).unwrap();
        let g = run_replacement_grid(&bm25t, &rows, &columns).unwrap();
        let m = g.column_means();
        assert!(m[0] > m[1] && m[1] > m[2]);

        let bad = vec![GridRow {
            query: "q".into(),
            template: "no slot".into(),
            original_value: None,
        }];
        assert!(matches!(run_replacement_grid(&bm25, &bad, &columns), Err(Error::Row { row: 1, .. })));

        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("row\toriginal\tford\thonda\ttoyota\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn grid_correlation() {
        let grid = ReplacementGrid {
            rows: vec![GridRow {
                query: "q".into(),
                template: "{X}".into(),
                original_value: None,
            }],
            columns: cols(&["a", "b", "c"]),
            scores: vec![vec![1.0, 2.0, 4.0]],
            original_index: vec![None],
        };
        let same: BTreeMap<String, f64> = [("a", 1.0), ("b", 2.0), ("c", 4.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert!((grid_bias_correlation(&grid, &same).unwrap() - 1.0).abs() < 1e-12);
        let rev: BTreeMap<String, f64> = [("a", -1.0), ("b", -2.0), ("c", -4.0)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert!((grid_bias_correlation(&grid, &rev).unwrap() + 1.0).abs() < 1e-12);
        let mut two = grid.clone();
        two.columns.pop();
        assert!(grid_bias_correlation(&two, &same).is_err());
        let mut missing = same.clone();
        missing.remove("c");
        assert!(grid_bias_correlation(&grid, &missing).is_err());
    }

    #[test]
    fn word_appending() {
        assert_eq!(append_to_word("Cud and cud, cuds", "cud", "a"), ("Cuda and cuda, cuds".to_owned(), 2));
        assert_eq!(append_to_word("scud", "cud", "a").1, 0);
        assert_eq!(append_to_word("über cud", "cud", "x"), ("über cudx".to_owned(), 1));
        assert_eq!(append_to_word("ÜBER cud", "über", "x"), ("ÜBERx cud".to_owned(), 1));
    }

    #[test]
    fn postfix_examples() {
        let cfg = AnalyzerConfig::default().with_stemming(false);
        let index = corpus(cfg);
        let th = Thesaurus::parse_str(EXAMPLE_THESAURUS_TSV).unwrap();
        let rows = vec![
            PostfixRow {
                query: "cud chewing".into(),
                doc: "cows chew their cud all day".into(),
                common_term: "cud".into(),
            },
            PostfixRow {
                query: "what is cud".into(),
                doc: "cud is partly digested food".into(),
                common_term: "cud".into(),
            },
        ];
        let chars: Vec<char> = ('a'..='z').collect();
        let bm25 = LexicalScorer::bm25(&index, Bm25Params::default()).unwrap();
        let r = run_postfix_probe(&bm25, &rows, &chars).unwrap();
        assert_eq!(r.chars.len(), 26);
        assert!(r.chars.iter().all(|c| c.mean_delta == r.chars[0].mean_delta && c.n == 2));

        let bm25t = LexicalScorer::bm25t(&index, Bm25Params::default(), &th).unwrap();
        let r = run_postfix_probe(&bm25t, &rows, &chars).unwrap();
        let a = r.chars[0].mean_delta;
        assert!(r.chars[1..].iter().all(|c| a > c.mean_delta));

        assert!(run_postfix_probe(&bm25, &rows, &[]).unwrap().chars.is_empty());
        let bad = vec![PostfixRow {
            query: "q".into(),
            doc: "nothing here".into(),
            common_term: "cud".into(),
        }];
        assert!(matches!(run_postfix_probe(&bm25, &bad, &chars), Err(Error::Row { row: 1, .. })));
        let mut buf = Vec::new();
        r.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 27);
    }

    #[test]
    fn year_sweep_examples() {
        let index = corpus(AnalyzerConfig::default());
        let th = Thesaurus::parse_str(EXAMPLE_THESAURUS_TSV).unwrap();
        let bm25t = LexicalScorer::bm25t(&index, Bm25Params::default(), &th).unwrap();
        let pts = run_year_sweep(&bm25t, "when did north carolina join ifta", "{year} north carolina join ifta", 2005..=2020).unwrap();
        assert_eq!(pts.len(), 16);
        let at = |y: i32| pts.iter().find(|p| p.0 == y).unwrap().1;
        assert!(at(2010) > at(2015));
        assert!(at(2015) > at(2016));

        let flat = run_year_sweep(&Constant, "q", "{year}", 1990..=1995).unwrap();
        assert!(flat.iter().all(|p| p.1 == 1.5));
        assert_eq!(run_year_sweep(&Constant, "q", "{year}", 2015..=2015).unwrap().len(), 1);
        assert!(run_year_sweep(&Constant, "q", "no slot", 2015..=2015).is_err());
    }

    #[test]
    fn svg_output() {
        let svg = svg_chart(ChartKind::Bar, "a<b", &cols(&["x", "y"]), &[1.0, -0.5]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<rect").count(), 3);
        let line = svg_chart(ChartKind::Line, "t", &cols(&["1"]), &[f64::NAN]);
        assert!(line.contains("<polyline"));
    }
}
