use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{relative_metric_decrease, relative_style_change};
use crate::error::{Error, Result};

/// One (source style, target style) cell. Metric scores are against
/// source-style references; percentages are the share of sentences the
/// target-style classifier accepts, for the references and for the system.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportCell {
    pub bleu: Option<f64>,
    pub meteor: Option<f64>,
    pub contractions: Option<usize>,
    pub reference_pct: Option<f64>,
    pub system_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub styles: Vec<String>,
    /// cells[src][tgt]
    pub cells: Vec<Vec<ReportCell>>,
    pub metadata: Vec<(String, String)>,
}

type Table = Vec<Vec<String>>;

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

impl EvalReport {
    pub fn new<S: Into<String>>(styles: impl IntoIterator<Item = S>) -> Self {
        let styles: Vec<String> = styles.into_iter().map(Into::into).collect();
        let n = styles.len();
        let metadata = vec![
            ("bleu".to_string(), "corpus BLEU-4, lowercased tokens, unsmoothed".to_string()),
            ("meteor_lite".to_string(), "alpha=0.9 beta=3 gamma=0.5 stages=exact,stem,synonym; sentence mean".to_string()),
            ("classifier_threshold".to_string(), "0.5".to_string()),
        ];
        EvalReport { styles, cells: vec![vec![ReportCell::default(); n]; n], metadata }
    }

    pub fn cell_mut(&mut self, src: usize, tgt: usize) -> &mut ReportCell {
        &mut self.cells[src][tgt]
    }

    pub fn relative_style_change(&self, src: usize, tgt: usize) -> Option<f64> {
        let c = &self.cells[src][tgt];
        if src == tgt {
            return None;
        }
        relative_style_change(c.reference_pct?, c.system_pct?)
    }

    pub fn relative_bleu_decrease(&self, src: usize, tgt: usize) -> Option<f64> {
        if src == tgt {
            return None;
        }
        relative_metric_decrease(self.cells[src][src].bleu?, self.cells[src][tgt].bleu?)
    }

    pub fn relative_meteor_decrease(&self, src: usize, tgt: usize) -> Option<f64> {
        if src == tgt {
            return None;
        }
        relative_metric_decrease(self.cells[src][src].meteor?, self.cells[src][tgt].meteor?)
    }

    fn matrix(&self, f: impl Fn(usize, usize) -> String) -> Table {
        let n = self.styles.len();
        let mut rows = vec![std::iter::once("src\\tgt".to_string()).chain(self.styles.iter().cloned()).collect()];
        for i in 0..n {
            rows.push(std::iter::once(self.styles[i].clone()).chain((0..n).map(|j| f(i, j))).collect());
        }
        rows
    }

    /// Named matrices: scores, census, classifier shares and relative changes.
    /// Diagonal cells of relative tables read `same`.
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let same = |i: usize, j: usize, v: Option<f64>| if i == j { "same".to_string() } else { fmt_opt(v, 1) };
        vec![
            ("bleu", self.matrix(|i, j| fmt_opt(self.cells[i][j].bleu.map(|x| 100.0 * x), 1))),
            ("meteor", self.matrix(|i, j| fmt_opt(self.cells[i][j].meteor.map(|x| 100.0 * x), 1))),
            ("contractions", self.matrix(|i, j| self.cells[i][j].contractions.map_or("n/a".into(), |c| c.to_string()))),
            (
                "style_pct",
                self.matrix(|i, j| {
                    let c = &self.cells[i][j];
                    format!("{} / {}", fmt_opt(c.reference_pct, 1), fmt_opt(c.system_pct, 1))
                }),
            ),
            ("relative_style_change", self.matrix(|i, j| same(i, j, self.relative_style_change(i, j)))),
            (
                "relative_decrease",
                self.matrix(|i, j| {
                    if i == j {
                        "same".to_string()
                    } else {
                        format!("{} / {}", fmt_opt(self.relative_bleu_decrease(i, j), 1), fmt_opt(self.relative_meteor_decrease(i, j), 1))
                    }
                }),
            ),
        ]
    }

    /// Writes `{name}.tsv` per table under `dir`, each starting with
    /// `# key<TAB>value` metadata lines.
    pub fn write_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, table) in self.tables() {
            let mut out = String::new();
            for (k, v) in &self.metadata {
                writeln!(out, "# {k}\t{v}").expect("string write");
            }
            for row in table {
                writeln!(out, "{}", row.join("\t")).expect("string write");
            }
            let path = dir.join(format!("{name}.tsv"));
            fs::write(&path, out).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Plain-text rendering with aligned columns.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, table) in self.tables() {
            writeln!(out, "== {name} ==").expect("string write");
            let cols = table[0].len();
            let widths: Vec<usize> = (0..cols).map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
            for row in &table {
                let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
                writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_relative_cells() {
        let mut r = EvalReport::new(["s0", "s1", "s2"]);
        r.cell_mut(0, 0).bleu = Some(0.331);
        r.cell_mut(0, 1).bleu = Some(0.262);
        r.cell_mut(0, 1).reference_pct = Some(8.1);
        r.cell_mut(0, 1).system_pct = Some(24.3);
        assert!((r.relative_bleu_decrease(0, 1).unwrap() - 20.846).abs() < 1e-2);
        assert!((r.relative_style_change(0, 1).unwrap() - 200.0).abs() < 1e-9);
        assert_eq!(r.relative_bleu_decrease(0, 0), None);
        for (_, t) in r.tables() {
            assert_eq!(t.len(), 4);
            assert!(t.iter().all(|row| row.len() == 4));
        }
        let text = r.render();
        assert!(text.contains("same"));
        let dir = tempfile::tempdir().unwrap();
        r.write_tsv(dir.path()).unwrap();
        let bleu = fs::read_to_string(dir.path().join("bleu.tsv")).unwrap();
        assert!(bleu.starts_with("# bleu\t"));
        assert!(bleu.contains("s0\t33.1\t26.2\tn/a"));
    }
}
