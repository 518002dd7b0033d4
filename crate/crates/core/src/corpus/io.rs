use std::fs;
use std::path::Path;

use super::{FactoredExample, LangId, StyleId};
use crate::error::{Error, Result};

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l.as_ref());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads two line-aligned text files.
pub fn read_parallel(src: &Path, tgt: &Path) -> Result<Vec<(String, String)>> {
    let (a, b) = (read_lines(src)?, read_lines(tgt)?);
    if a.len() != b.len() {
        let line = a.len().min(b.len()) + 1;
        return Err(Error::Data {
            path: tgt.to_path_buf(),
            line,
            msg: format!("{} lines vs {} in {}", b.len(), a.len(), src.display()),
        });
    }
    Ok(a.into_iter().zip(b).collect())
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

/// `src_piece_ids<TAB>lang_factor<TAB>style_factor<TAB>tgt_piece_ids` lines.
pub fn write_shard(path: &Path, examples: &[FactoredExample]) -> Result<()> {
    let lines: Vec<String> = examples
        .iter()
        .map(|e| format!("{}\t{}\t{}\t{}", join_ids(&e.src_ids), e.lang().0, e.style().0, join_ids(&e.tgt_ids)))
        .collect();
    write_lines(path, &lines)
}

pub fn read_shard(path: &Path) -> Result<Vec<FactoredExample>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let bad = |msg: String| Error::Data { path: path.to_path_buf(), line: i + 1, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let [src, lang, style, tgt] = fields[..] else {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        let ids = |s: &str| -> Result<Vec<u32>> {
            s.split(' ').filter(|t| !t.is_empty()).map(|t| t.parse().map_err(|_| bad(format!("bad id {t:?}")))).collect()
        };
        let src_ids = ids(src)?;
        if src_ids.is_empty() {
            return Err(bad("empty source".into()));
        }
        let lang = LangId(lang.parse().map_err(|_| bad(format!("bad language factor {lang:?}")))?);
        let style = StyleId(style.parse().map_err(|_| bad(format!("bad style factor {style:?}")))?);
        let n = src_ids.len();
        out.push(FactoredExample { src_ids, factor_lang: vec![lang; n], factor_style: vec![style; n], tgt_ids: ids(tgt)? });
    }
    Ok(out)
}
