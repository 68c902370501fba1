//! Attention heatmap export: CSV, plain PGM and an annotation sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::resampler::{Block, ResampledOutput};

#[derive(Debug, Clone)]
pub struct HeatmapArtifact {
    pub matrix: Tensor,
    pub blocks: Vec<Block>,
    pub tokens_per_frame: usize,
    pub csv: PathBuf,
    pub pgm: PathBuf,
    pub annotations: PathBuf,
}

fn sibling(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    stem.with_file_name(name)
}

/// `query,t0,..,t{L-1}` header, then one row per query. Values use the
/// shortest representation that parses back to the same bits.
pub fn heatmap_csv(matrix: &Tensor) -> String {
    let mut s = String::from("query");
    for t in 0..matrix.cols() {
        write!(s, ",t{t}").unwrap();
    }
    s.push('\n');
    for q in 0..matrix.rows() {
        write!(s, "{q}").unwrap();
        for v in matrix.row(q) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_heatmap_csv(text: &str) -> Result<Tensor> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Argument("empty heatmap csv".into()))?;
    let cols = header.split(',').count().saturating_sub(1);
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let values: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Argument(format!("heatmap csv line {}: {e}", i + 2)))?;
        if values.len() != cols {
            return Err(Error::Argument(format!(
                "heatmap csv line {} has {} values, header has {cols}",
                i + 2,
                values.len()
            )));
        }
        rows.push(values);
    }
    Ok(Tensor::from_rows(&rows))
}

pub fn read_heatmap_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_heatmap_csv(&text)
}

/// Plain (P2) 8-bit graymap, each row scaled by its own maximum.
pub fn heatmap_pgm(matrix: &Tensor) -> String {
    let (h, w) = (matrix.rows(), matrix.cols());
    let mut s = format!("P2\n# attention rows normalized by row maximum\n{w} {h}\n255\n");
    for q in 0..h {
        let row = matrix.row(q);
        let max = row.iter().copied().fold(0.0, f64::max);
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                let level = if max > 0.0 { (255.0 * v / max).round() } else { 0.0 };
                (level as u8).to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Query and token ranges as half-open integer intervals.
pub fn annotations(matrix: &Tensor, blocks: &[Block], tokens_per_frame: usize) -> String {
    let mut s = format!(
        "queries {}\ntokens {}\ntokens_per_frame {}\n",
        matrix.rows(),
        matrix.cols(),
        tokens_per_frame
    );
    if let Some(frames) = matrix.cols().checked_div(tokens_per_frame) {
        for f in 0..frames {
            writeln!(s, "frame {f} tokens {}..{}", f * tokens_per_frame, (f + 1) * tokens_per_frame).unwrap();
        }
    }
    for (i, b) in blocks.iter().enumerate() {
        writeln!(
            s,
            "block {i} queries {}..{} tokens {}..{}",
            b.queries.start, b.queries.end, b.tokens.start, b.tokens.end
        )
        .unwrap();
    }
    s
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.annotations.txt`.
pub fn export_heatmap(out: &ResampledOutput, stem: &Path) -> Result<HeatmapArtifact> {
    let matrix = out
        .attention
        .clone()
        .ok_or_else(|| Error::Unavailable("attention maps were dropped for this output".into()))?;
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let csv = sibling(stem, ".csv");
    let pgm = sibling(stem, ".pgm");
    let ann = sibling(stem, ".annotations.txt");
    fs::write(&csv, heatmap_csv(&matrix)).map_err(|e| Error::io(&csv, e))?;
    fs::write(&pgm, heatmap_pgm(&matrix)).map_err(|e| Error::io(&pgm, e))?;
    fs::write(&ann, annotations(&matrix, &out.blocks, out.tokens_per_frame)).map_err(|e| Error::io(&ann, e))?;
    Ok(HeatmapArtifact {
        matrix,
        blocks: out.blocks.clone(),
        tokens_per_frame: out.tokens_per_frame,
        csv,
        pgm,
        annotations: ann,
    })
}

/// One CSV per head, `<stem>.head<h>.csv`.
pub fn export_head_heatmaps(out: &ResampledOutput, stem: &Path) -> Result<Vec<PathBuf>> {
    if out.attention.is_none() {
        return Err(Error::Unavailable("attention maps were dropped for this output".into()));
    }
    out.head_attention
        .iter()
        .enumerate()
        .map(|(h, m)| {
            let path = sibling(stem, &format!(".head{h}.csv"));
            fs::write(&path, heatmap_csv(m)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_scales_rows_independently() {
        let m = Tensor::from_rows(&[vec![0.5, 0.25, 0.0], vec![0.0, 0.0, 0.0]]);
        let pgm = heatmap_pgm(&m);
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[2], "3 2");
        assert_eq!(lines[4], "255 128 0");
        assert_eq!(lines[5], "0 0 0");
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let m = Tensor::from_rows(&[vec![0.1 + 0.2, 1.0 / 3.0], vec![f64::MIN_POSITIVE, 0.0]]);
        let back = parse_heatmap_csv(&heatmap_csv(&m)).unwrap();
        assert_eq!(back, m);
    }
}
