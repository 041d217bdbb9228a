//! Plot-ready column extraction from CSV outputs. Nothing is rendered.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ROWS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisMeta {
    pub name: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Sidecar describing a `.dat` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotMeta {
    pub source: String,
    pub data_file: String,
    pub columns: Vec<AxisMeta>,
    pub rows_in: usize,
    pub rows_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOutput {
    pub data_path: PathBuf,
    pub meta_path: PathBuf,
    pub meta: PlotMeta,
}

/// Row indices of an evenly spread subsample that keeps the first and last rows.
pub fn downsample_indices(n: usize, max_rows: usize) -> Vec<usize> {
    if n <= max_rows {
        return (0..n).collect();
    }
    if max_rows == 1 {
        return vec![0];
    }
    (0..max_rows)
        .map(|i| ((i as u128 * (n - 1) as u128) / (max_rows - 1) as u128) as usize)
        .collect()
}

/// Writes the selected columns of `csv_path` as whitespace-separated rows to `out`
/// (default: the CSV path with extension `.dat`) and axis metadata to `<out>.json`.
pub fn plot_emit(
    csv_path: &Path,
    columns: &[String],
    out: Option<&Path>,
    max_rows: usize,
) -> Result<PlotOutput> {
    if columns.is_empty() {
        return Err(Error::BadParam("no columns requested".into()));
    }
    if max_rows == 0 {
        return Err(Error::BadParam("max_rows must be >= 1".into()));
    }
    let file =
        File::open(csv_path).map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::MissingColumn(c.clone()))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let row = idx
            .iter()
            .map(|&i| {
                let field = rec
                    .get(i)
                    .ok_or_else(|| Error::Format("short row".into()))?;
                if field.is_empty() {
                    return Ok(f64::NAN);
                }
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("not a number: {field}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let keep = downsample_indices(rows.len(), max_rows);

    let data_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv_path.with_extension("dat"));
    let mut meta_name = data_path.as_os_str().to_owned();
    meta_name.push(".json");
    let meta_path = PathBuf::from(meta_name);

    let mut w = BufWriter::new(File::create(&data_path)?);
    for &i in &keep {
        let line: Vec<String> = rows[i].iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;

    let axes = columns
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let finite = keep.iter().map(|&i| rows[i][c]).filter(|v| v.is_finite());
            let (min, max) =
                finite.fold((None, None), |(lo, hi): (Option<f64>, Option<f64>), v| {
                    (
                        Some(lo.map_or(v, |l| l.min(v))),
                        Some(hi.map_or(v, |h| h.max(v))),
                    )
                });
            AxisMeta {
                name: name.clone(),
                min,
                max,
            }
        })
        .collect();
    let meta = PlotMeta {
        source: csv_path.display().to_string(),
        data_file: data_path.display().to_string(),
        columns: axes,
        rows_in: rows.len(),
        rows_out: keep.len(),
    };
    let mut mw = BufWriter::new(File::create(&meta_path)?);
    serde_json::to_writer_pretty(&mut mw, &meta)?;
    writeln!(mw)?;
    mw.flush()?;
    Ok(PlotOutput {
        data_path,
        meta_path,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "t,energy\n0,1\n").unwrap();
        let e = plot_emit(
            &p,
            &["t".into(), "enstrophy".into()],
            None,
            DEFAULT_MAX_ROWS,
        )
        .unwrap_err();
        assert_eq!(e, Error::MissingColumn("enstrophy".into()));
    }

    #[test]
    fn header_only_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "t,energy\n").unwrap();
        let out = plot_emit(&p, &["t".into(), "energy".into()], None, DEFAULT_MAX_ROWS).unwrap();
        assert_eq!(std::fs::read(&out.data_path).unwrap().len(), 0);
        assert_eq!(out.meta.rows_out, 0);
        assert!(out.meta_path.exists());
    }

    #[test]
    fn long_series_is_capped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut s = String::from("t,energy,x\n");
        for i in 0..5001 {
            s.push_str(&format!("{},{},{}\n", i as f64 * 1e-3, 1.0 + i as f64, -1));
        }
        std::fs::write(&p, s).unwrap();
        let out = plot_emit(&p, &["t".into(), "energy".into()], None, DEFAULT_MAX_ROWS).unwrap();
        let text = std::fs::read_to_string(&out.data_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2000);
        assert_eq!(lines[0].split(' ').count(), 2);
        assert_eq!(out.meta.columns[1].max, Some(5001.0));
        assert_eq!(out.meta.columns[0].min, Some(0.0));
    }

    proptest! {
        #[test]
        fn downsample_keeps_ends_and_order(n in 0usize..10_000, m in 1usize..3000) {
            let k = downsample_indices(n, m);
            prop_assert_eq!(k.len(), n.min(m));
            prop_assert!(k.windows(2).all(|w| w[0] < w[1]));
            if n > 0 && m > 1 {
                prop_assert_eq!(k[0], 0);
                prop_assert_eq!(*k.last().unwrap(), n - 1);
            }
        }
    }
}
